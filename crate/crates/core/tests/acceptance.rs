//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsma_core::conic::fixtures::constructed_program;
use rsma_core::conic::{solve, SolveStatus, SolverSettings};
use rsma_core::fbl::{symbol_vector_rate, FblParams};
use rsma_core::harness::oracle::siso_noma_grid;
use rsma_core::harness::{
    aggregate, relative_gain, run_sweep, strongest_users, ExperimentSpec, GroupKey, LlsSpec,
    Metric, ResultRow, SweepAxes,
};
use rsma_core::linalg::{CMat, C64};
use rsma_core::model::{generate_rayleigh_channels, ChannelRealization, SchemeKind, SystemConfig};
use rsma_core::phy::polar::LLR_CLIP;
use rsma_core::phy::{
    design_stream_rates, mmse_sic_receive, polar_decode_scl, polar_encode, transmit, Frame,
    LinkPlan, LinkSettings, PolarCodeConfig,
};
use rsma_core::sca::{solve_mmf, AoSettings, InitStrategy};

type Outcome = (bool, String);

fn ao(init: InitStrategy) -> AoSettings {
    AoSettings {
        init,
        ..AoSettings::default()
    }
}

fn solve_rsma_strongest(
    config: &SystemConfig,
    seed: u64,
    init: InitStrategy,
) -> rsma_core::sca::AoOutcome {
    let ch = generate_rayleigh_channels(config, seed);
    let config = config
        .clone()
        .with_scheme(SchemeKind::Rsma, strongest_users(&ch, 1));
    let fbl = FblParams::from_config(&config).unwrap();
    solve_mmf(&ch, &config, &fbl, &ao(init)).unwrap()
}

fn ao_monotonicity() -> Outcome {
    let config = SystemConfig::new(2, 2, 2, 1.0)
        .with_snr_db(20.0)
        .with_blocklength(500.0);
    let mut worst = f64::INFINITY;
    let mut escapes = 0;
    for seed in 0..50 {
        let out = solve_rsma_strongest(&config, seed, InitStrategy::SvdMmse);
        escapes += out.escapes;
        let d = out
            .half_step_trace()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        worst = worst.min(d);
    }
    (
        worst >= -1e-6,
        format!("50 seeds, smallest half-step delta {worst:.3e}, {escapes} escape restarts"),
    )
}

fn scheme_degeneracy() -> Outcome {
    let base = SystemConfig::new(2, 2, 2, 1.0).with_snr_db(20.0);
    let mut ok = true;
    let mut worst_t = 0.0f64;
    for seed in 0..20 {
        let ch = generate_rayleigh_channels(&base, seed);
        let noma = base.clone().with_scheme(SchemeKind::Noma, vec![]);
        let rsma = base.clone().with_scheme(SchemeKind::Rsma, vec![]);
        let fbl = FblParams::from_config(&noma).unwrap();
        let a = solve_mmf(&ch, &noma, &fbl, &AoSettings::default()).unwrap();
        let b = solve_mmf(&ch, &rsma, &fbl, &AoSettings::default()).unwrap();
        ok &= a.report == b.report;
        worst_t = worst_t.max((a.state.t - b.state.t).abs());
    }
    (
        ok && worst_t <= 1e-9,
        format!("20 seeds, reports identical: {ok}, largest |dt| {worst_t:.1e}"),
    )
}

fn warm_start_dominance() -> Outcome {
    let base = SystemConfig::new(2, 2, 2, 1.0).with_snr_db(20.0);
    let mut worst = f64::INFINITY;
    for seed in 0..20 {
        let ch = generate_rayleigh_channels(&base, seed);
        let noma = base.clone().with_scheme(SchemeKind::Noma, vec![]);
        let fbl = FblParams::from_config(&noma).unwrap();
        let n = solve_mmf(&ch, &noma, &fbl, &AoSettings::default()).unwrap();
        let r = solve_rsma_strongest(&base, seed, InitStrategy::NomaWarmStart);
        worst = worst.min(r.state.t - n.state.t);
    }
    (
        worst >= -1e-6,
        format!("20 seeds, smallest t_rsma - t_noma {worst:.3e}"),
    )
}

fn toy_oracle() -> Outcome {
    // transmit power is not stated for this instance; 20 dB is used
    let config = SystemConfig::new(2, 1, 1, 100.0)
        .with_blocklength(500.0)
        .with_epsilon(1e-5);
    let fbl = FblParams::from_config(&config).unwrap();
    let grid = siso_noma_grid([1.2, 0.8], &config, &fbl, 200).unwrap();
    let ch = ChannelRealization::from_matrices(vec![
        CMat::from_element(1, 1, C64::new(1.2, 0.0)),
        CMat::from_element(1, 1, C64::new(0.8, 0.0)),
    ]);
    let noma = solve_mmf(&ch, &config, &fbl, &AoSettings::default())
        .unwrap()
        .mmf();
    let rsma_cfg = config.clone().with_scheme(SchemeKind::Rsma, vec![0]);
    let rsma = solve_mmf(&ch, &rsma_cfg, &fbl, &ao(InitStrategy::Multistart))
        .unwrap()
        .mmf();
    let gap = (noma - grid.mmf).abs() / grid.mmf;
    (
        gap <= 0.02 && rsma >= noma - 1e-6,
        format!(
            "grid {:.5}, sca noma {noma:.5} ({:.3}%), rsma {rsma:.5}",
            grid.mmf,
            gap * 100.0
        ),
    )
}

fn fbl_limits() -> Outcome {
    let mut worst = 0.0f64;
    let mut monotone = true;
    for gamma in [0.1, 1.0, 10.0] {
        let r = symbol_vector_rate(&[gamma], &FblParams::new(1e9, 1e-5).unwrap());
        worst = worst.max((r - (1.0f64 + gamma).log2()).abs());
        let grid: Vec<f64> = (0..50)
            .map(|i| {
                let n = 10f64.powf(1.0 + 8.0 * i as f64 / 49.0);
                symbol_vector_rate(&[gamma], &FblParams::new(n, 1e-5).unwrap())
            })
            .collect();
        monotone &= grid.windows(2).all(|w| w[1] >= w[0]);
    }
    (
        worst < 1e-3 && monotone,
        format!("largest gap to Shannon at N=1e9 {worst:.2e}, monotone {monotone}"),
    )
}

fn spec(
    users: usize,
    rx: usize,
    schemes: &[SchemeKind],
    n: &[f64],
    splits: &[usize],
    reps: usize,
    seed: u64,
) -> ExperimentSpec {
    let base = SystemConfig::new(users, 2, rx, 100.0);
    ExperimentSpec {
        base,
        axes: SweepAxes {
            snr_db: vec![20.0],
            blocklength: n.to_vec(),
            scheme: schemes.to_vec(),
            split_count: splits.to_vec(),
        },
        realizations: reps,
        base_seed: seed,
        output: None,
        ao: None,
        rsma_init: None,
        lls: None,
    }
}

const ALL: [SchemeKind; 3] = [SchemeKind::Rsma, SchemeKind::Noma, SchemeKind::Sdma];

fn mean_of(rows: &[ResultRow], f: impl Fn(&ResultRow) -> bool) -> f64 {
    let v: Vec<f64> = rows.iter().filter(|r| f(r)).filter_map(|r| r.mmf).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn failures(rows: &[ResultRow]) -> usize {
    rows.iter().filter(|r| r.failed()).count()
}

fn blocklength_trend() -> Outcome {
    let ns = [200.0, 500.0, 1000.0, 2000.0];
    let mut ok = true;
    let mut notes = Vec::new();
    for (rx, label) in [(4, "Nr=4"), (2, "Nr=2")] {
        let rows = run_sweep(&spec(2, rx, &ALL, &ns, &[1], 20, 100), None).unwrap();
        ok &= failures(&rows) == 0;
        let means = aggregate(
            &rows,
            &[GroupKey::Scheme, GroupKey::Blocklength],
            Metric::Mmf,
        )
        .unwrap();
        let get = |s: &str, n: f64| {
            means
                .iter()
                .find(|m| m.key[0] == s && m.key[1] == n.to_string())
                .map_or(f64::NAN, |m| m.mean)
        };
        for s in ["rsma", "noma", "sdma"] {
            let series: Vec<f64> = ns.iter().map(|&n| get(s, n)).collect();
            let mono = series.windows(2).all(|w| w[1] >= w[0] - 1e-9);
            ok &= mono;
            notes.push(format!(
                "{label} {s} [{}]",
                series
                    .iter()
                    .map(|x| format!("{x:.3}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        for &n in &ns {
            let dominant = get("rsma", n) >= get("noma", n) && get("rsma", n) >= get("sdma", n);
            ok &= dominant;
            if !dominant {
                notes.push(format!("{label} N={n}: rsma below a baseline"));
            }
        }
    }
    (ok, notes.join("; "))
}

fn gain_bands(under: &[ResultRow]) -> Outcome {
    let over = run_sweep(
        &spec(
            4,
            4,
            &[SchemeKind::Rsma, SchemeKind::Sdma],
            &[200.0],
            &[1],
            50,
            300,
        ),
        None,
    )
    .unwrap();
    let one_split = |r: &ResultRow| r.key.scheme != SchemeKind::Rsma || r.key.split_count == 1;
    let rsma = mean_of(under, |r| r.key.scheme == SchemeKind::Rsma && one_split(r));
    let noma = mean_of(under, |r| r.key.scheme == SchemeKind::Noma);
    let sdma = mean_of(under, |r| r.key.scheme == SchemeKind::Sdma);
    let g_noma = relative_gain(rsma, noma).unwrap_or(f64::NAN);
    let g_sdma = relative_gain(rsma, sdma).unwrap_or(f64::NAN);
    let o_rsma = mean_of(&over, |r| r.key.scheme == SchemeKind::Rsma);
    let o_sdma = mean_of(&over, |r| r.key.scheme == SchemeKind::Sdma);
    let g_over = relative_gain(o_rsma, o_sdma).unwrap_or(f64::NAN);
    let ok =
        (1.0..=15.0).contains(&g_noma) && g_sdma >= 15.0 && g_over >= 50.0 && failures(&over) == 0;
    (
        ok,
        format!(
            "Nr=8 N=250: over NOMA {g_noma:.2}% (band 1..15), over SDMA {g_sdma:.2}% (>=15); Nr=4 N=200: over SDMA {g_over:.2}% (>=50); 50 realizations"
        ),
    )
}

fn split_count_trend(under: &[ResultRow]) -> Outcome {
    let reps = 20;
    let more = run_sweep(
        &spec(4, 8, &[SchemeKind::Rsma], &[250.0], &[2, 3, 4], reps, 200),
        None,
    )
    .unwrap();
    let mut by_count: Vec<Vec<f64>> = vec![Vec::new(); 5];
    for r in under.iter().chain(&more) {
        if r.key.scheme == SchemeKind::Rsma && r.key.realization < reps {
            if let Some(m) = r.mmf {
                by_count[r.key.split_count].push(m);
            }
        }
    }
    let mut ok = failures(&more) == 0;
    let mut notes = Vec::new();
    for c in 1..4 {
        let (a, b) = (&by_count[c], &by_count[c + 1]);
        if a.len() != reps || b.len() != reps {
            return (
                false,
                format!("missing rows for split count {c} or {}", c + 1),
            );
        }
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let mean = d.iter().sum::<f64>() / reps as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / reps as f64).sqrt();
        let sigma = sd / (reps as f64).sqrt();
        ok &= mean >= -sigma;
        notes.push(format!("{c}->{}: {mean:+.4} (sigma {sigma:.4})", c + 1));
    }
    let means: Vec<String> = (1..5)
        .map(|c| {
            format!(
                "{:.4}",
                by_count[c].iter().sum::<f64>() / by_count[c].len() as f64
            )
        })
        .collect();
    (
        ok,
        format!("means [{}]; {}", means.join(", "), notes.join(", ")),
    )
}

fn conic_contract() -> Outcome {
    let settings = SolverSettings::default();
    let mut worst_kkt = 0.0f64;
    let mut worst_obj = 0.0f64;
    let mut ok = true;
    for seed in 0..100 {
        let c = constructed_program(seed);
        match solve(&c.program, &settings) {
            Ok(sol) => {
                ok &= sol.status == SolveStatus::Optimal;
                worst_kkt = worst_kkt.max(sol.kkt.max());
                worst_obj = worst_obj.max((sol.objective_value - c.optimal_value).abs());
            }
            Err(_) => ok = false,
        }
    }
    ok &= worst_kkt <= 1e-7 && worst_obj <= 1e-6;
    (
        ok,
        format!("100 programs, worst KKT {worst_kkt:.1e}, worst objective error {worst_obj:.1e}"),
    )
}

fn sc_decode(llrs: &[f64], info: &[bool], u: &mut Vec<u8>) -> Vec<u8> {
    if llrs.len() == 1 {
        let bit = if info[u.len()] {
            (llrs[0] < 0.0) as u8
        } else {
            0
        };
        u.push(bit);
        return vec![bit];
    }
    let h = llrs.len() / 2;
    let f: Vec<f64> = (0..h)
        .map(|i| llrs[i].signum() * llrs[i + h].signum() * llrs[i].abs().min(llrs[i + h].abs()))
        .collect();
    let left = sc_decode(&f, info, u);
    let g: Vec<f64> = (0..h)
        .map(|i| llrs[i + h] + if left[i] == 0 { llrs[i] } else { -llrs[i] })
        .collect();
    let right = sc_decode(&g, info, u);
    let mut out: Vec<u8> = left.iter().zip(&right).map(|(a, b)| a ^ b).collect();
    out.extend(right);
    out
}

fn bpsk(codeword: &[u8], esn0_db: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sigma = (0.5 / 10f64.powf(esn0_db / 10.0)).sqrt();
    codeword
        .iter()
        .map(|&b| {
            let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
            let n = (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            let x = if b == 0 { 1.0 } else { -1.0 };
            (2.0 * (x + sigma * n) / (sigma * sigma)).clamp(-LLR_CLIP, LLR_CLIP)
        })
        .collect()
}

fn noiseless_links(rx: usize) -> (bool, String) {
    let settings = LinkSettings::default();
    let mut ok = true;
    let mut fails = Vec::new();
    for scheme in ALL {
        for seed in 0..10 {
            let base = SystemConfig::new(2, 2, rx, 100.0);
            let ch = generate_rayleigh_channels(&base, 500 + seed);
            let split = if scheme == SchemeKind::Rsma {
                strongest_users(&ch, 1)
            } else {
                vec![]
            };
            let config = base.with_scheme(scheme, split);
            let fbl = FblParams::from_config(&config).unwrap();
            let out = solve_mmf(&ch, &config, &fbl, &ao(InitStrategy::Multistart)).unwrap();
            let s = &out.state;
            let rates = design_stream_rates(&ch, &s.p, &s.g, &out.order, &config).unwrap();
            let plan = LinkPlan::from_rates(&rates, &settings).unwrap();
            let frame = Frame::random(&plan, seed).unwrap();
            let y = transmit(&frame, &ch, &s.p, &out.order, &config, 0.0, 0).unwrap();
            let r =
                mmse_sic_receive(&y, &frame, &plan, &ch, &s.p, &out.order, &config, 0.0).unwrap();
            if r.recovered_bits != frame.user_bits(&out.order, config.users) {
                ok = false;
                fails.push(format!("{scheme}/{seed}"));
            }
        }
    }
    (
        ok,
        if fails.is_empty() {
            "all bits".into()
        } else {
            format!("lost bits in {}", fails.join(" "))
        },
    )
}

fn lls_sanity() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    for rx in [4, 2] {
        let (pass, note) = noiseless_links(rx);
        ok &= pass;
        notes.push(format!("noiseless Nr={rx}: {note}"));
    }

    let cfg = PolarCodeConfig::new(128, 64, 1.0)
        .unwrap()
        .with_list_size(1);
    let mut info = vec![true; 128];
    for &i in &cfg.frozen {
        info[i] = false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut same = true;
    for _ in 0..1000 {
        let bits: Vec<u8> = (0..64).map(|_| rng.gen::<bool>() as u8).collect();
        let llrs = bpsk(&polar_encode(&bits, &cfg).unwrap(), 1.0, &mut rng);
        let mut u = Vec::new();
        sc_decode(&llrs, &info, &mut u);
        let sc: Vec<u8> = u
            .iter()
            .zip(&info)
            .filter_map(|(&b, &f)| f.then_some(b))
            .collect();
        same &= polar_decode_scl(&llrs, &cfg).unwrap().bits == sc;
    }
    ok &= same;
    notes.push(format!("list-1 equals SC on 1000 frames: {same}"));

    let code = PolarCodeConfig::new(256, 128, 0.0).unwrap();
    let frames = 10_000;
    let bler: Vec<f64> = [-1.0, 0.0, 1.0]
        .iter()
        .map(|&snr| {
            let mut rng = ChaCha8Rng::seed_from_u64(snr as u64 + 40);
            let mut errors = 0;
            for _ in 0..frames {
                let bits: Vec<u8> = (0..128).map(|_| rng.gen::<bool>() as u8).collect();
                let llrs = bpsk(&polar_encode(&bits, &code).unwrap(), snr, &mut rng);
                errors += (polar_decode_scl(&llrs, &code).unwrap().bits != bits) as usize;
            }
            errors as f64 / frames as f64
        })
        .collect();
    let mono = bler
        .windows(2)
        .all(|w| w[1] <= w[0] + (w[0] * (1.0 - w[0]) / frames as f64).sqrt());
    ok &= mono;
    notes.push(format!("BLER at -1/0/1 dB {bler:?}"));

    for (rx, label) in [(4, "underloaded"), (2, "overloaded")] {
        let mut s = spec(2, rx, &ALL, &[500.0], &[1], 20, 700);
        s.lls = Some(LlsSpec {
            frames: 25,
            settings: LinkSettings::default(),
        });
        let rows = run_sweep(&s, None).unwrap();
        ok &= failures(&rows) == 0;
        let above = rows
            .iter()
            .filter(|r| r.throughput.unwrap_or(0.0) > r.mmf.unwrap_or(0.0) + 1e-12)
            .count();
        ok &= above == 0;
        let t = aggregate(&rows, &[GroupKey::Scheme], Metric::Throughput).unwrap();
        let get = |name: &str| {
            t.iter()
                .find(|m| m.key[0] == name)
                .map_or(f64::NAN, |m| m.mean)
        };
        let (r, n, d) = (get("rsma"), get("noma"), get("sdma"));
        // NOMA may sit slightly below SDMA at link level
        ok &= r >= n && n >= 0.95 * d;
        notes.push(format!(
            "{label} throughput rsma {r:.3} noma {n:.3} sdma {d:.3}, rows above theory {above}"
        ));
    }
    (ok, notes.join("; "))
}

fn main() {
    // libtest-style flags (e.g. --list, filters) are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let (ok, detail) = f();
        println!(
            "{} criterion {n} ({name}): {detail} [{:.0}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        failed += (!ok) as usize;
    };
    report(1, "AO monotonicity", &mut ao_monotonicity);
    report(2, "scheme degeneracy", &mut scheme_degeneracy);
    report(3, "warm-start dominance", &mut warm_start_dominance);
    report(4, "toy brute-force oracle", &mut toy_oracle);
    report(5, "finite-blocklength limits", &mut fbl_limits);
    report(6, "blocklength trend", &mut blocklength_trend);
    let under = run_sweep(&spec(4, 8, &ALL, &[250.0], &[1], 50, 200), None).unwrap();
    report(7, "gain bands", &mut || gain_bands(&under));
    report(8, "split-count trend", &mut || split_count_trend(&under));
    report(9, "conic solver contract", &mut conic_contract);
    report(10, "link-level sanity", &mut lls_sanity);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
