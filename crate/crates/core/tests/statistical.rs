//! Distribution-level properties, bands calibrated by 20-seed pilot runs.

mod common;

use common::{gaussian, scaled_gaussian};
use mcm_core::harness::reference_projector;
use mcm_core::online_pca::OnlineEigen;
use mcm_core::rng::StreamRng;
use mcm_core::{
    draw_sample, eigenspace_error, mc_summary, projector, run_benchmark, top_eigenvectors,
    weiszfeld_mcm, weiszfeld_pipeline, Contamination, EstimatorKind, McmConfig, McmState,
    MedianState, RealVec, RunConfig, Sampler, ScenarioConfig, StepSchedule, SymMat,
    WeiszfeldOptions,
};

fn top_projector(m: &SymMat, q: usize) -> SymMat {
    projector(&top_eigenvectors(m, q).unwrap()).unwrap()
}

#[test]
fn streaming_median_of_gaussian_is_near_zero() {
    // Pilot: median over seeds ~0.014, worst ~0.025.
    let norms: Vec<f64> = (0..20)
        .map(|s| {
            let mut rng = StreamRng::new(1000 + s);
            let mut st = MedianState::new(gaussian(&mut rng, 5), StepSchedule::default());
            for _ in 1..20_000 {
                st.update(&gaussian(&mut rng, 5)).unwrap();
            }
            st.average().iter().map(|x| x * x).sum::<f64>().sqrt()
        })
        .collect();
    assert!(mc_summary(&norms).unwrap().median <= 0.05, "{norms:?}");
}

#[test]
fn isotropic_gaussian_mcm_is_multiple_of_identity() {
    // Pilot: largest off-diagonal entry ~0.007 (median), 0.010 (worst).
    for s in 0..20 {
        let mut rng = StreamRng::new(2000 + s);
        let mut st = McmState::known_median(RealVec::zeros(4), &McmConfig::default()).unwrap();
        for _ in 0..20_000 {
            st.update(&gaussian(&mut rng, 4)).unwrap();
        }
        let v = st.estimate().unwrap();
        let worst = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| v.get(i, j).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.05, "seed {s}: {worst}");
    }
}

#[test]
fn anisotropic_top_direction_is_recovered() {
    let sd = [2.0, 1.0, 0.5, 0.5, 0.5];
    let truth = projector(&[RealVec::basis(5, 0)]).unwrap();
    let mut rng = StreamRng::new(77);
    let mut st = McmState::joint(5, &McmConfig::default()).unwrap();
    for _ in 0..20_000 {
        st.update(&scaled_gaussian(&mut rng, &sd)).unwrap();
    }
    let r = eigenspace_error(&top_projector(st.estimate().unwrap(), 1), &truth).unwrap();
    assert!(r <= 0.05, "{r}");
}

#[test]
fn weiszfeld_and_recursive_mcm_agree() {
    let sample = draw_sample(
        &ScenarioConfig::new(20, 0.0, Contamination::None, 3).unwrap(),
        5000,
    )
    .unwrap();
    let (_, w) = weiszfeld_pipeline(&sample, &WeiszfeldOptions::default()).unwrap();
    let mut st = McmState::joint(20, &McmConfig::default()).unwrap();
    for x in &sample {
        st.update(x).unwrap();
    }
    let r = eigenspace_error(
        &top_projector(&w, 2),
        &top_projector(st.estimate().unwrap(), 2),
    )
    .unwrap();
    assert!(r <= 0.1, "{r}");
}

#[test]
fn averaged_iterate_beats_raw_iterate() {
    let d = 5;
    let proxy = {
        let mut rng = StreamRng::new(9);
        let pts: Vec<RealVec> = (0..100_000).map(|_| gaussian(&mut rng, d)).collect();
        weiszfeld_mcm(
            &pts,
            &RealVec::zeros(d),
            &WeiszfeldOptions {
                eps: 1e-10,
                ..Default::default()
            },
        )
        .unwrap()
        .estimate
    };
    let (mut raw, mut avg) = (Vec::new(), Vec::new());
    for s in 0..20 {
        let mut rng = StreamRng::new(500 + s);
        let mut st = McmState::known_median(RealVec::zeros(d), &McmConfig::default()).unwrap();
        for _ in 0..100_000 {
            st.update(&gaussian(&mut rng, d)).unwrap();
        }
        raw.push(st.iterate().sub(&proxy).unwrap().frob_norm_sq());
        avg.push(st.estimate().unwrap().sub(&proxy).unwrap().frob_norm_sq());
    }
    let (raw, avg) = (
        mc_summary(&raw).unwrap().median,
        mc_summary(&avg).unwrap().median,
    );
    assert!(raw > avg, "raw {raw} vs averaged {avg}");
}

#[test]
fn online_eigenvectors_follow_batch_on_clean_brownian_stream() {
    let d = 100;
    let mut worst = Vec::new();
    for s in 0..20 {
        let mut sampler =
            Sampler::new(&ScenarioConfig::new(d, 0.0, Contamination::None, 300 + s).unwrap())
                .unwrap();
        let mut st = McmState::joint(d, &McmConfig::default()).unwrap();
        let mut eig = OnlineEigen::new(d, 3, s).unwrap();
        let mut seed_worst: f64 = 0.0;
        for n in 1..=2000 {
            let x = sampler.next_row();
            let centered: Option<Vec<f64>> = st
                .center()
                .map(|c| x.iter().zip(c).map(|(a, b)| a - b).collect());
            st.update(&x).unwrap();
            if let Some(y) = centered {
                eig.observe(&y, st.estimate().unwrap()).unwrap();
            }
            if n % 500 == 0 {
                let online = projector(eig.basis().unwrap().ortho()).unwrap();
                let batch = top_projector(st.estimate().unwrap(), 3);
                seed_worst = seed_worst.max(eigenspace_error(&online, &batch).unwrap());
            }
        }
        worst.push(seed_worst);
    }
    let med = mc_summary(&worst).unwrap().median;
    assert!(med <= 0.1, "median worst-checkpoint disagreement {med}");
}

#[test]
fn clean_pca_is_accurate() {
    let cfg = RunConfig {
        scenario: ScenarioConfig::new(10, 0.0, Contamination::None, 1).unwrap(),
        n: 2000,
        q: 1,
        replications: 10,
        estimators: vec![EstimatorKind::Pca],
        ..Default::default()
    };
    let r = run_benchmark(&cfg).unwrap().rows[0].median_r;
    assert!(r <= 0.05, "{r}");
}

#[test]
fn contaminated_bench_separates_pca_from_mcm() {
    let cfg = RunConfig {
        scenario: ScenarioConfig::new(50, 0.1, Contamination::StudentT1, 11).unwrap(),
        n: 200,
        q: 2,
        replications: 50,
        estimators: vec![EstimatorKind::Pca, EstimatorKind::McmW],
        ..Default::default()
    };
    let rows = run_benchmark(&cfg).unwrap().rows;
    assert!(rows[0].median_r > 1.0, "pca {}", rows[0].median_r);
    assert!(rows[1].median_r < 0.2, "mcm_w {}", rows[1].median_r);
}

#[test]
fn reference_projector_is_top_brownian_pair() {
    let p = reference_projector(50, 2).unwrap();
    assert!((p.trace() - 2.0).abs() < 1e-10);
    let mut sampler =
        Sampler::new(&ScenarioConfig::new(50, 0.0, Contamination::None, 4).unwrap()).unwrap();
    let mut cov = mcm_core::RunningCovariance::new(50);
    for _ in 0..20_000 {
        cov.push(&sampler.next_row());
    }
    let r = eigenspace_error(&top_projector(&cov.covariance().unwrap(), 2), &p).unwrap();
    assert!(r < 0.01, "{r}");
}
