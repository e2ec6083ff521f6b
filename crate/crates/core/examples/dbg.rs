use std::time::Instant;
use slicesim_core::io::load_scenario;
use slicesim_core::scenario::Simulation;
use slicesim_core::units::{dbm_to_watts, watts_to_dbm};

fn seg(slot: u32) -> usize { if slot < 33 { 0 } else if slot < 67 { 1 } else { 2 } }

fn main() {
    let budget = dbm_to_watts(23.0);
    let t2 = load_scenario(std::path::Path::new("scenarios/table2.json")).unwrap();
    let t3 = load_scenario(std::path::Path::new("scenarios/table3.json")).unwrap();

    for seed in [1u64, 2, 3, 5, 7, 11, 13] {
        // ---- table2 checks (criterion 7)
        let t0 = Instant::now();
        let m2 = Simulation::new(&t2, Some(seed), None).unwrap().run().unwrap();
        let t2_time = t0.elapsed();
        let excl = |s: u32| (33..38).contains(&s) || (67..72).contains(&s);
        let mut ok7 = true;
        let mut worst_cl = 0.0f64; let mut worst_ur = 0.0f64; let mut worst_ts = 0.0f64;
        for m in &m2 {
            if m.slot < 30 || excl(m.slot) { continue; }
            let cl = m.per_slice.iter().find(|s| s.slice_id == "cl").unwrap();
            let ur = m.per_slice.iter().find(|s| s.slice_id == "urllc").unwrap();
            let ts = m.per_slice.iter().find(|s| s.slice_id == "ts").unwrap();
            let dc = (cl.sum_rate_bps - 27e6).abs() / 27e6;
            let du = (ur.mean_rate_bps - 2.001e6).abs() / 2.001e6;
            let dt = (ts.sum_rate_bps - 1.64e6).abs() / 1.64e6;
            worst_cl = worst_cl.max(dc); worst_ur = worst_ur.max(du); worst_ts = worst_ts.max(dt);
            if dc > 0.01 || du > 0.001 || dt > 0.001 { ok7 = false; }
        }
        // ---- table3 without admission (criterion 8)
        let t0 = Instant::now();
        let m3a = Simulation::new(&t3, Some(seed), Some(false)).unwrap().run().unwrap();
        let t3a_time = t0.elapsed();
        let mut seg_min = [f64::INFINITY; 3];
        for m in &m3a { let s = seg(m.slot); seg_min[s] = seg_min[s].min(m.total_power_w); }
        let ok8 = seg_min.iter().all(|&w| w > budget);
        // ---- table3 with admission (criterion 9)
        let t0 = Instant::now();
        let r3 = Simulation::new(&t3, Some(seed), None).unwrap().run();
        let t3b_time = t0.elapsed();
        match r3 {
            Err(e) => println!("seed {seed}: table3+adm ERROR {e}"),
            Ok(m3b) => {
                let mut ok_pow = true; let mut ok_iso = true; let mut cl_means = [0.0f64; 3]; let mut cnt = [0usize; 3];
                let mut max_pow = 0.0f64;
                for m in &m3b {
                    max_pow = max_pow.max(m.total_power_w);
                    if m.total_power_w > budget * 1.01 * (1.0 + 1e-9) { ok_pow = false; }
                    let ur = m.per_slice.iter().find(|s| s.slice_id == "urllc").unwrap();
                    let ts = m.per_slice.iter().find(|s| s.slice_id == "ts").unwrap();
                    if (ur.sum_rate_bps - 80e6).abs() > 1e-6 * 80e6 { ok_iso = false; }
                    if (ts.sum_rate_bps - 3.28e6).abs() > 1e-6 * 3.28e6 { ok_iso = false; }
                    let cl = m.per_slice.iter().find(|s| s.slice_id == "cl").unwrap();
                    // skip transient right after changes for segment means
                    let s = seg(m.slot);
                    if m.slot >= 5 && !( (33..38).contains(&m.slot) || (67..72).contains(&m.slot) ) {
                        cl_means[s] += cl.sum_rate_bps; cnt[s] += 1;
                    }
                }
                for s in 0..3 { cl_means[s] /= cnt[s] as f64; }
                let red: Vec<f64> = cl_means.iter().map(|&m| 270e6 - m).collect();
                let ordering = red[2] > red[0] && red[0] > red[1];
                let below = cl_means.iter().all(|&m| m < 270e6);
                println!("seed {seed}: c7 {} (cl {:.4} ur {:.6} ts {:.6}) c8 {} (min dBm {:.2},{:.2},{:.2}) c9 pow {} iso {} below {} ord {} (cl means {:.1},{:.1},{:.1} Mbps; max {:.2} dBm) times {:?}/{:?}/{:?}",
                    ok7, worst_cl, worst_ur, worst_ts,
                    ok8, watts_to_dbm(seg_min[0]), watts_to_dbm(seg_min[1]), watts_to_dbm(seg_min[2]),
                    ok_pow, ok_iso, below, ordering,
                    cl_means[0]/1e6, cl_means[1]/1e6, cl_means[2]/1e6, watts_to_dbm(max_pow),
                    t2_time, t3a_time, t3b_time);
            }
        }
    }
}
