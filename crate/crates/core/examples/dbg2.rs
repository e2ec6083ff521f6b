use slicesim_core::io::load_scenario;
use slicesim_core::scenario::Simulation;
use slicesim_core::units::watts_to_dbm;
fn main() {
    let t3 = load_scenario(std::path::Path::new("scenarios/table3.json")).unwrap();
    let mut sim = Simulation::new(&t3, Some(1), None).unwrap();
    while let Some(step) = sim.step().unwrap() {
        let m = &step.metrics;
        let cl = m.per_slice.iter().find(|s| s.slice_id == "cl").unwrap();
        let readj = m.readjustment.as_ref().map(|r| (r.iterations, r.final_p_opt, r.hit_iteration_cap));
        
        println!("slot {:3} P {:9.3} dBm cl {:7.2} Mbps conv {} iters {:6} readj {:?}",
            m.slot, watts_to_dbm(m.total_power_w), cl.sum_rate_bps/1e6, m.converged, m.solver_iterations, readj);
        if m.slot > 40 && m.total_power_w < 0.21 { if m.slot > 99 { break; } }
    }
}
