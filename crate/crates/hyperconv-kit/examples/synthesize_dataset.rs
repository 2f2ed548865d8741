//! Generate a paired dataset on disk and read it back.

use hyperconv_kit::data::{
    load_pair_dir, procedural_texture, synth_pair, write_dataset, DegradationParams, ImageFormat,
};

fn main() -> hyperconv_kit::Result<()> {
    let dir = std::env::temp_dir().join("hckit_example_ds");
    let mut deg = DegradationParams::clean(7);
    deg.sigma = 0.02;
    deg.shot_gain = 0.001;
    deg.gains = [1.8, 1.0, 1.5];
    deg.gamma = 2.2;

    let samples: Vec<_> = (0..4)
        .map(|i| {
            let clean = procedural_texture(100 + i, 64)?;
            synth_pair(&clean, &deg, &format!("{i:03}"))
        })
        .collect::<hyperconv_kit::Result<_>>()?;
    write_dataset(&dir, &samples, ImageFormat::Png16, Some(&deg))?;

    let loaded = load_pair_dir(&dir)?;
    for s in &loaded {
        println!("{}: raw {:?} target {:?}", s.id, s.raw.shape(), s.target.shape());
    }
    println!("wrote and reloaded {} pairs at {}", loaded.len(), dir.display());
    Ok(())
}
