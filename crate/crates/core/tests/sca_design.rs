use rsma_core::fbl::{mmse_combiner_update, sinr_grid, user_rates, CombinerSet, FblParams};
use rsma_core::harness::oracle::siso_noma_grid;
use rsma_core::linalg::{CMat, C64};
use rsma_core::model::{
    compute_decoding_order, generate_rayleigh_channels, ChannelRealization, SchemeKind, SymbolPart,
    SystemConfig,
};
use rsma_core::sca::{
    build_combiner_subproblem, build_precoder_subproblem, initialize_state, solve_mmf,
    solve_mmf_noma, solve_mmf_sdma, solve_mmf_with_order, AoSettings, DesignState, InitStrategy,
};
use rsma_core::Error;

fn base(k: usize, nt: usize, nr: usize) -> SystemConfig {
    SystemConfig::new(k, nt, nr, 100.0).with_blocklength(500.0)
}

fn strongest(ch: &ChannelRealization) -> usize {
    let g = ch.gains();
    (0..g.len())
        .max_by(|&a, &b| g[a].total_cmp(&g[b]).then(b.cmp(&a)))
        .unwrap()
}

fn rsma(config: &SystemConfig, ch: &ChannelRealization) -> SystemConfig {
    config
        .clone()
        .with_scheme(SchemeKind::Rsma, vec![strongest(ch)])
}

fn real(rows: usize, cols: usize, v: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, v.iter().map(|&x| C64::new(x, 0.0)))
}

fn fbl(config: &SystemConfig) -> FblParams {
    FblParams::from_config(config).unwrap()
}

#[test]
fn subproblem_decision_variable_counts() {
    let config = base(3, 2, 3);
    let ch = generate_rayleigh_channels(&config, 4);
    let config = rsma(&config, &ch);
    let order = compute_decoding_order(&ch, &config);
    let f = fbl(&config);
    let state = initialize_state(&ch, &order, &config, &f);
    let (m, l) = (order.len(), config.streams());
    assert_eq!(m, 4);
    let p = build_precoder_subproblem(&state, &ch, &order, &config, &f).unwrap();
    assert_eq!(
        p.layout.decision_variables(),
        m * config.tx_antennas * l * 2 + m * l + 1
    );
    let g = build_combiner_subproblem(&state, &ch, &order, &config, &f).unwrap();
    assert_eq!(
        g.layout.decision_variables(),
        m * config.rx_antennas * l * 2 + m * l + 1
    );
}

#[test]
fn incumbent_is_feasible_for_both_blocks() {
    for seed in 0..5 {
        let config = base(2, 2, 2);
        let ch = generate_rayleigh_channels(&config, seed);
        for config in [config.clone(), rsma(&config, &ch)] {
            let order = compute_decoding_order(&ch, &config);
            let f = fbl(&config);
            let state = initialize_state(&ch, &order, &config, &f);
            for sub in [
                build_precoder_subproblem(&state, &ch, &order, &config, &f).unwrap(),
                build_combiner_subproblem(&state, &ch, &order, &config, &f).unwrap(),
            ] {
                let v = sub.program.max_violation(&sub.incumbent);
                assert!(v <= 1e-7, "seed {seed} {:?} violation {v}", sub.block);
                // the incumbent objective is the state's t up to the interior margin
                let t = sub.program.objective_value(&sub.incumbent);
                assert!(t <= state.t + 1e-9 && t >= state.t - 1e-2 * (1.0 + state.t.abs()));
            }
        }
    }
}

#[test]
fn malformed_state_is_rejected() {
    let config = base(2, 2, 2);
    let ch = generate_rayleigh_channels(&config, 0);
    let order = compute_decoding_order(&ch, &config);
    let f = fbl(&config);
    let mut state = initialize_state(&ch, &order, &config, &f);
    state.rho.pop();
    assert!(matches!(
        build_precoder_subproblem(&state, &ch, &order, &config, &f),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn single_user_precoder_reaches_matched_filter_rate() {
    // K = 1, L = 1: Nt = 2, Nr = 1
    let config = base(1, 2, 1);
    let ch = ChannelRealization::from_matrices(vec![CMat::from_row_slice(
        1,
        2,
        &[C64::new(0.3, -1.1), C64::new(0.8, 0.4)],
    )]);
    let order = compute_decoding_order(&ch, &config);
    let f = fbl(&config);
    let sigma_max2 = ch.user(0).norm_squared();
    let oracle = f.stream_rate(config.power * sigma_max2);

    // start from a poor precoder direction at low power
    let mut state = initialize_state(&ch, &order, &config, &f);
    state.p.matrices[0] = real(2, 1, &[0.5, 0.0]);
    let state = rsma_core::sca::state_from_beams(&ch, state.p, state.g, &order, &config, &f);
    let settings = AoSettings {
        init: InitStrategy::Given {
            state: Box::new(state),
        },
        ..AoSettings::default()
    };
    let out = solve_mmf(&ch, &config, &f, &settings).unwrap();
    assert!(
        (out.state.t - oracle).abs() <= 1e-3,
        "t {} oracle {oracle}",
        out.state.t
    );
    assert!((out.mmf() - oracle).abs() <= 1e-3);

    // from the default start the optimum is reached in at most three iterations
    let out = solve_mmf(&ch, &config, &f, &AoSettings::default()).unwrap();
    assert!(out.iterations() <= 3, "{} iterations", out.iterations());
    assert!((out.mmf() - oracle).abs() <= 1e-3);
}

#[test]
fn single_user_combiner_reaches_mmse_sinr() {
    // K = 1, L = 1: Nt = 1, Nr = 3
    let config = base(1, 1, 3);
    let ch = generate_rayleigh_channels(&config, 11);
    let order = compute_decoding_order(&ch, &config);
    let f = fbl(&config);
    let mut state = initialize_state(&ch, &order, &config, &f);
    let mmse = mmse_combiner_update(&ch, &state.p, &order, &config);
    let target = sinr_grid(&ch, &state.p, &mmse, &order, &config)[0][0];

    // misaligned combiner, precoder already optimal (single antenna, full power)
    state.g = CombinerSet {
        matrices: vec![real(1, 3, &[1.0, -0.5, 0.25])],
    };
    let state = rsma_core::sca::state_from_beams(&ch, state.p, state.g, &order, &config, &f);
    assert!(state.rho[0][0] < 0.9 * target);
    let settings = AoSettings {
        init: InitStrategy::Given {
            state: Box::new(state),
        },
        ..AoSettings::default()
    };
    let out = solve_mmf(&ch, &config, &f, &settings).unwrap();
    let got = out.report.per_stream_sinr[0][0];
    assert!(
        (got - target).abs() <= 1e-4 * target,
        "sinr {got} mmse {target}"
    );
}

#[test]
fn objective_trace_is_monotone() {
    for seed in 0..5 {
        let config = base(2, 2, 2);
        let ch = generate_rayleigh_channels(&config, seed);
        for config in [config.clone(), rsma(&config, &ch)] {
            let out = solve_mmf(&ch, &config, &fbl(&config), &AoSettings::default()).unwrap();
            let trace = out.half_step_trace();
            let worst = trace
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            assert!(
                worst >= -1e-6,
                "seed {seed} {:?}: delta {worst}",
                config.scheme
            );
        }
    }
}

#[test]
fn true_mmf_never_falls_below_surrogate() {
    for seed in 0..4 {
        let config = base(2, 2, 2);
        let ch = generate_rayleigh_channels(&config, seed);
        let config = rsma(&config, &ch);
        let out = solve_mmf(&ch, &config, &fbl(&config), &AoSettings::default()).unwrap();
        for r in &out.trace {
            assert!(
                r.true_mmf >= r.t - 1e-4,
                "seed {seed} iter {}: {} < {}",
                r.iteration,
                r.true_mmf,
                r.t
            );
        }
        assert!(out.mmf() >= out.state.t - 1e-4);
        let viol = out
            .state
            .p
            .max_power_violation(&out.order, config.users, config.power);
        assert!(viol <= 1e-6 * config.power, "power violation {viol}");
    }
}

#[test]
fn noma_warm_start_dominates_noma() {
    for seed in 0..4 {
        let config = base(2, 2, 2);
        let ch = generate_rayleigh_channels(&config, seed);
        let f = fbl(&config);
        let noma = solve_mmf_noma(&ch, &config, &f, &AoSettings::default()).unwrap();
        let settings = AoSettings {
            init: InitStrategy::NomaWarmStart,
            ..AoSettings::default()
        };
        let split = rsma(&config, &ch);
        let out = solve_mmf(&ch, &split, &f, &settings).unwrap();
        assert!(
            out.state.t >= noma.state.t - 1e-6,
            "seed {seed}: {} < {}",
            out.state.t,
            noma.state.t
        );
        assert!(out.mmf() >= noma.mmf() - 1e-6);
        // the warm start silences the second part
        assert_eq!(
            out.order.entries.last().unwrap().part,
            SymbolPart::SecondSplit
        );
    }
}

#[test]
fn multistart_is_the_better_of_both_starts() {
    let config = base(2, 2, 2);
    let ch = generate_rayleigh_channels(&config, 1);
    let split = rsma(&config, &ch);
    let f = fbl(&config);
    let run = |init| {
        let settings = AoSettings {
            init,
            ..AoSettings::default()
        };
        solve_mmf(&ch, &split, &f, &settings).unwrap().mmf()
    };
    let best = run(InitStrategy::Multistart);
    let cold = run(InitStrategy::SvdMmse);
    let warm = run(InitStrategy::NomaWarmStart);
    assert_eq!(best, cold.max(warm));
    let noma = solve_mmf_noma(&ch, &config, &f, &AoSettings::default())
        .unwrap()
        .mmf();
    assert!(best >= noma - 1e-9);
}

#[test]
fn multistart_never_loses_by_splitting_one_more_user() {
    let settings = AoSettings {
        init: InitStrategy::Multistart,
        ..AoSettings::default()
    };
    for seed in 0..3 {
        let config = base(3, 2, 4);
        let ch = generate_rayleigh_channels(&config, seed);
        let f = fbl(&config);
        let g = ch.gains();
        let mut by_gain: Vec<usize> = (0..3).collect();
        by_gain.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
        let mut last = f64::NEG_INFINITY;
        for c in 1..=3 {
            let mut split = by_gain[..c].to_vec();
            split.sort_unstable();
            let cfg = config.clone().with_scheme(SchemeKind::Rsma, split);
            let mmf = solve_mmf(&ch, &cfg, &f, &settings).unwrap().mmf();
            assert!(mmf >= last - 1e-9, "seed {seed}, {c} splits: {mmf} < {last}");
            last = mmf;
        }
    }
}

#[test]
fn rsma_without_splits_is_noma() {
    for seed in 0..3 {
        let config = base(2, 2, 2);
        let ch = generate_rayleigh_channels(&config, seed);
        let f = fbl(&config);
        let as_rsma = config.clone().with_scheme(SchemeKind::Rsma, vec![]);
        let a = solve_mmf(&ch, &as_rsma, &f, &AoSettings::default()).unwrap();
        let b = solve_mmf_noma(&ch, &config, &f, &AoSettings::default()).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.state.t.to_bits(), b.state.t.to_bits());
        assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn symmetric_users_get_balanced_rates() {
    let config = base(2, 2, 2);
    let h = generate_rayleigh_channels(&base(1, 2, 2), 21)
        .channels
        .remove(0);
    // same singular values: second user sees the first user's channel with
    // swapped receive antennas
    let mut h2 = h.clone();
    h2.swap_rows(0, 1);
    let ch = ChannelRealization::from_matrices(vec![h, h2]);
    let out = solve_mmf_noma(&ch, &config, &fbl(&config), &AoSettings::default()).unwrap();
    let r = &out.report.per_user;
    assert!((r[0] - r[1]).abs() <= 0.05 * r[0].max(r[1]), "rates {r:?}");
}

#[test]
fn siso_noma_matches_grid_search() {
    let config = SystemConfig::new(2, 1, 1, 100.0)
        .with_blocklength(500.0)
        .with_epsilon(1e-5)
        .with_scheme(SchemeKind::Noma, vec![]);
    let ch = ChannelRealization::from_matrices(vec![real(1, 1, &[1.2]), real(1, 1, &[0.8])]);
    let f = fbl(&config);
    let oracle = siso_noma_grid([1.2, 0.8], &config, &f, 200).unwrap();
    let noma = solve_mmf(&ch, &config, &f, &AoSettings::default()).unwrap();
    let rel = (noma.mmf() - oracle.mmf).abs() / oracle.mmf;
    assert!(
        rel <= 0.02,
        "sca {} grid {} ({:.3}%)",
        noma.mmf(),
        oracle.mmf,
        100.0 * rel
    );

    let split = config.clone().with_scheme(SchemeKind::Rsma, vec![0]);
    let settings = AoSettings {
        init: InitStrategy::Multistart,
        ..AoSettings::default()
    };
    let rs = solve_mmf(&ch, &split, &f, &settings).unwrap();
    assert!(
        rs.mmf() >= noma.mmf() - 1e-6,
        "rsma {} noma {}",
        rs.mmf(),
        noma.mmf()
    );
}

#[test]
fn sdma_rejects_split_users() {
    let config = base(2, 2, 2).with_scheme(SchemeKind::Sdma, vec![0]);
    let ch = generate_rayleigh_channels(&config, 0);
    let err = solve_mmf(&ch, &config, &fbl(&config), &AoSettings::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn orthogonal_channels_make_sdma_match_noma() {
    let config = base(2, 2, 4);
    let a = generate_rayleigh_channels(&base(1, 2, 2), 3)
        .channels
        .remove(0);
    let b = generate_rayleigh_channels(&base(1, 2, 2), 4)
        .channels
        .remove(0);
    let mut h1 = CMat::zeros(4, 2);
    let mut h2 = CMat::zeros(4, 2);
    h1.view_mut((0, 0), (2, 2)).copy_from(&a);
    h2.view_mut((2, 0), (2, 2)).copy_from(&b);
    let ch = ChannelRealization::from_matrices(vec![h1, h2]);
    let f = fbl(&config);
    let noma = solve_mmf_noma(&ch, &config, &f, &AoSettings::default()).unwrap();
    let sdma = solve_mmf_sdma(&ch, &config, &f, &AoSettings::default()).unwrap();
    let rel = (sdma.mmf() - noma.mmf()).abs() / noma.mmf();
    assert!(rel <= 0.05, "sdma {} noma {}", sdma.mmf(), noma.mmf());
}

#[test]
fn silencing_a_split_part_never_helps() {
    for seed in 0..3 {
        let config = base(2, 2, 2);
        let ch = generate_rayleigh_channels(&config, seed);
        let config = rsma(&config, &ch);
        let f = fbl(&config);
        let out = solve_mmf(&ch, &config, &f, &AoSettings::default()).unwrap();
        for (m, id) in out.order.entries.iter().enumerate() {
            if id.part == SymbolPart::Whole {
                continue;
            }
            let mut p = out.state.p.clone();
            p.matrices[m].fill(C64::new(0.0, 0.0));
            let r = user_rates(&ch, &p, &out.state.g, &out.order, &config, &f);
            assert!(
                r.mmf <= out.mmf() + 1e-6,
                "seed {seed} part {m}: {} > {}",
                r.mmf,
                out.mmf()
            );
        }
    }
}

#[test]
fn reruns_reproduce_the_design() {
    let config = base(3, 2, 2);
    let ch = generate_rayleigh_channels(&config, 9);
    let config = rsma(&config, &ch);
    let f = fbl(&config);
    let a = solve_mmf(&ch, &config, &f, &AoSettings::default()).unwrap();
    let b = solve_mmf(&ch, &config, &f, &AoSettings::default()).unwrap();
    assert!((a.state.t - b.state.t).abs() <= 1e-9);
    assert_eq!(a, b);
}

#[test]
fn given_state_must_match_order() {
    let config = base(2, 2, 2);
    let ch = generate_rayleigh_channels(&config, 0);
    let f = fbl(&config);
    let order = compute_decoding_order(&ch, &config);
    let mut state: DesignState = initialize_state(&ch, &order, &config, &f);
    state.p.matrices.pop();
    let settings = AoSettings {
        init: InitStrategy::Given {
            state: Box::new(state),
        },
        ..AoSettings::default()
    };
    assert!(solve_mmf_with_order(&ch, &order, &config, &f, &settings).is_err());
}

#[test]
fn settings_validation() {
    let config = base(1, 1, 1);
    let ch = generate_rayleigh_channels(&config, 0);
    let bad = AoSettings {
        max_outer_iters: 0,
        ..AoSettings::default()
    };
    assert!(matches!(
        solve_mmf(&ch, &config, &fbl(&config), &bad),
        Err(Error::Config(_))
    ));
}
