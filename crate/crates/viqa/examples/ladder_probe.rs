use viqa::distortion::{distort, synth_mos, synth_scene, DistortionKind, DistortionSpec};

fn main() {
    let scenes: Vec<_> = (0..3).map(|s| synth_scene(1000 + s, 512, 256, 1)).collect();
    for (kind, strengths) in [
        (DistortionKind::Jpegish, vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0]),
        (DistortionKind::Blur, vec![0.75, 1.5, 3.0, 6.0, 12.0, 24.0]),
        (DistortionKind::Noise, vec![0.02, 0.05, 0.1, 0.2, 0.3]),
    ] {
        println!("{kind:?}:");
        for s in strengths {
            let spec = DistortionSpec {
                kind,
                strength: s,
                seed: 3,
            };
            let mos: Vec<f64> = scenes
                .iter()
                .map(|r| synth_mos(r, &distort(r, &spec)).unwrap())
                .collect();
            println!(
                "  strength {s:6.2}: mos {:.1} {:.1} {:.1}",
                mos[0], mos[1], mos[2]
            );
        }
    }
}
