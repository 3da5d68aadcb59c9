use std::sync::Arc;
use std::time::Instant;

use viqa::distortion::{default_ladder, distort, synth_mos, synth_scene, DistortionSpec};
use viqa::model::EncoderConfig;
use viqa::train::{kfold_evaluate, train, TrainConfig, TrainSample};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let channels: usize = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(1);
    let epochs: usize = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(3);
    let scenes: usize = args.get(3).and_then(|v| v.parse().ok()).unwrap_or(20);
    let kfold: bool = args.get(4).map(|v| v == "kfold").unwrap_or(false);

    let t0 = Instant::now();
    let specs: Vec<DistortionSpec> = default_ladder(7);
    let mut samples = Vec::new();
    for s in 0..scenes {
        let reference = Arc::new(synth_scene(1000 + s as u64, 512, 256, channels));
        for spec in &specs {
            let distorted = Arc::new(distort(&reference, spec));
            let mos = synth_mos(&reference, &distorted).unwrap();
            samples.push(TrainSample {
                dist_image: distorted,
                ref_image: reference.clone(),
                mos,
                scene_id: format!("scene{s:02}"),
                codec: spec.kind.as_str().into(),
                strength: spec.strength,
            });
        }
    }
    println!("dataset: {} samples in {:.1?}", samples.len(), t0.elapsed());
    let moses: Vec<f64> = samples.iter().map(|s| s.mos).collect();
    let (lo, hi) = moses
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| {
            (a.min(m), b.max(m))
        });
    println!("mos range: {lo:.1} .. {hi:.1}");
    // per-kind summary
    for kind in ["jpegish", "blur", "noise"] {
        let vals: Vec<f64> = samples
            .iter()
            .filter(|s| s.codec == kind)
            .map(|s| s.mos)
            .collect();
        let mn = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("  {kind}: {mn:.1} .. {mx:.1}");
    }

    let conv: Vec<usize> = std::env::var("CONV")
        .map(|v| v.split(',').map(|c| c.parse().unwrap()).collect())
        .unwrap_or_else(|_| vec![8, 16, 32]);
    let feature_dim: usize = std::env::var("FDIM")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(64);
    println!("conv {conv:?} D={feature_dim}");
    let cfg = TrainConfig {
        epochs,
        seed: 7,
        adversarial: false,
        encoder: EncoderConfig {
            feature_dim,
            conv_channels: conv,
        },
        ..Default::default()
    };

    if kfold {
        let t = Instant::now();
        let report = kfold_evaluate(&samples, &cfg, 5, false).unwrap();
        println!(
            "kfold({} epochs) in {:.1?}: plcc {:.4} srocc {:.4} rmse {:.3}",
            epochs,
            t.elapsed(),
            report.aggregate.plcc,
            report.aggregate.srocc,
            report.aggregate.rmse
        );
        for f in &report.folds {
            println!(
                "  fold: plcc {:.4} srocc {:.4} rmse {:.3} (n={})",
                f.plcc, f.srocc, f.rmse, f.n
            );
        }
    } else {
        // single split: first 16 scenes train, last 4 validate
        let train_set: Vec<TrainSample> = samples
            .iter()
            .filter(|s| s.scene_id < format!("scene{:02}", scenes - 4))
            .cloned()
            .collect();
        let val_set: Vec<TrainSample> = samples
            .iter()
            .filter(|s| s.scene_id >= format!("scene{:02}", scenes - 4))
            .cloned()
            .collect();
        println!("train {} / val {}", train_set.len(), val_set.len());
        let t = Instant::now();
        let (_, _, history) = train(&train_set, Some(&val_set), &cfg).unwrap();
        println!("{} epochs in {:.1?}", epochs, t.elapsed());
        for r in &history.epochs {
            println!(
                "epoch {:2}: loss_p {:9.3} val_plcc {} val_srocc {} val_rmse {}",
                r.epoch,
                r.loss_p,
                r.val_plcc.map(|v| format!("{v:.4}")).unwrap_or("-".into()),
                r.val_srocc.map(|v| format!("{v:.4}")).unwrap_or("-".into()),
                r.val_rmse.map(|v| format!("{v:.3}")).unwrap_or("-".into()),
            );
        }
    }
}
