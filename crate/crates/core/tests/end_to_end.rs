use deblur_core::baselines::{storm_laplacian, storm_recon, StormConfig};
use deblur_core::deblur::{initialize, reconstruct, PretrainConfig};
use deblur_core::metrics::mean_frame_ser;
use deblur_core::mri::{GramDataTerm, OperatorMode};
use deblur_core::phantom::{acquire, golden_angle_schedule, make_coilmaps, make_phantom, ImageSeries, PhantomConfig};
use deblur_core::{Real, ReconConfig};

fn tiny_phantom() -> PhantomConfig {
    PhantomConfig { height: 16, width: 16, duration: 0.6, respiratory_amplitude: 1.0, ..PhantomConfig::default() }
}

fn tiny_recon() -> ReconConfig {
    let mut cfg = ReconConfig { rank: 3, hidden: 4, epochs: 4, ..ReconConfig::default() };
    cfg.pretrain_spatial = PretrainConfig { epochs: 5, ..cfg.pretrain_spatial };
    cfg.pretrain_temporal = PretrainConfig { epochs: 20, ..cfg.pretrain_temporal };
    cfg
}

fn run<T: Real>() -> (f64, Vec<f64>) {
    let truth: ImageSeries<T> = make_phantom(&tiny_phantom()).unwrap();
    let maps = make_coilmaps::<T>(2, 16, 16, 1).unwrap();
    let sched = golden_angle_schedule::<T>(truth.n_frames(), 4, 16).unwrap();
    let data = acquire(&truth, &maps, &sched, OperatorMode::Radial, 0.1, 3).unwrap();
    let lap = storm_laplacian(&data, None, Some(3)).unwrap();
    let storm = storm_recon(&data, &lap, &StormConfig { rank: 3, iters: 5, ..StormConfig::default() }).unwrap();
    let cfg = tiny_recon();
    let (state, report) = initialize(&cfg, &storm.factors, 16, 16).unwrap();
    assert!(report.spatial_error.is_some_and(f64::is_finite));
    let term = GramDataTerm::new(data.operator().unwrap(), &data.samples).unwrap();
    let out = reconstruct(&term, &cfg, state, Some(&truth), &mut |_| Ok(())).unwrap();
    let recon = out.factors.series(16, 16, truth.frame_dt).unwrap();
    (mean_frame_ser(&recon, &truth).unwrap(), out.trace.ser_curve())
}

#[test]
fn small_problem_runs_in_double_precision() {
    let (ser, curve) = run::<f64>();
    assert!(ser.is_finite() && ser > 0.0, "{ser}");
    assert_eq!(curve.len(), 5);
    assert!(curve.iter().all(|v| v.is_finite()));
    assert!((curve[4] - ser).abs() < 1e-9);
}

#[test]
fn single_precision_tracks_double() {
    let (s64, _) = run::<f64>();
    let (s32, curve) = run::<f32>();
    assert!(curve.iter().all(|v| v.is_finite()));
    assert!((s64 - s32).abs() < 0.5, "{s64} vs {s32}");
}
