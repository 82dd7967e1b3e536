//! Saves a checkpoint, reloads it two ways, and shows the failure modes.

use idf::io::{decode_tensors, encode_weights, load_weights, load_weights_inferred, save_weights};
use idf::{ModelConfig, ModelWeights};

fn main() -> idf::Result<()> {
    let narrow = ModelConfig {
        hidden_width: 32,
        ..ModelConfig::default()
    };
    let w = ModelWeights::init(narrow, 1)?;
    let path = std::env::temp_dir().join("idf-roundtrip.idfw");
    save_weights(&w, &path)?;

    for (name, t) in decode_tensors(&encode_weights(&w))? {
        println!("{name:<12} {:?}", t.dims());
    }
    let inferred = load_weights_inferred(&path, &ModelConfig::default())?;
    println!(
        "inferred hidden width {}, {} parameters",
        inferred.config().hidden_width,
        inferred.param_count()
    );

    match load_weights(&path, &ModelConfig::default()) {
        Err(e) => println!("strict load with the default width: {e}"),
        Ok(_) => println!("strict load unexpectedly succeeded"),
    }
    let mut bytes = encode_weights(&w);
    bytes[40] ^= 0xff;
    match decode_tensors(&bytes) {
        Err(e) => println!("flipped byte: {e}"),
        Ok(_) => println!("corruption went unnoticed"),
    }
    Ok(())
}
