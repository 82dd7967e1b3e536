use std::io::Write as _;
use std::path::Path;

use crate::engine::DenoiseResult;
use crate::error::{IdfError, Result};
use crate::io::png::save_image;
use crate::tensor::Image;

/// Writes `trace.jsonl` (one object per iteration) plus whatever images the
/// result carries: `iter_TT.png` estimates and `center_TT.png` kernel centres.
pub fn write_trace(result: &DenoiseResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| IdfError::io(dir, e))?;
    let path = dir.join("trace.jsonl");
    let mut out = Vec::new();
    for rec in &result.iterations {
        serde_json::to_writer(&mut out, rec)
            .map_err(|e| IdfError::io(&path, std::io::Error::other(e)))?;
        out.push(b'\n');
    }
    std::fs::File::create(&path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| IdfError::io(&path, e))?;
    for (i, est) in result.estimates.iter().enumerate() {
        save_image(est, &dir.join(format!("iter_{:02}.png", i + 1)))?;
    }
    let (h, w) = (result.estimate.height(), result.estimate.width());
    for (i, plane) in result.kernel_centers.iter().enumerate() {
        let img = Image::new(1, h, w, plane.clone())?;
        save_image(&img, &dir.join(format!("center_{:02}.png", i + 1)))?;
    }
    Ok(())
}
