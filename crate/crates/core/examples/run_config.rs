//! Drive the command-line runner from code on a config written on the fly.

use spatial_spectra::cli::{parse_config, run};

fn main() -> spatial_spectra::Result<()> {
    let text = "dimension = 1\nradius = 0.5\nf = x^2\nn_grid = 256, 1024\nreplicates = 1000\nseed = 3\n";
    let cfg = parse_config(text)?;
    println!("parsed: d = {}, model = {}, grid = {:?}", cfg.dim, cfg.model.name(), cfg.n_grid);

    let dir = std::env::temp_dir().join("spatial-spectra-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("small.cfg");
    std::fs::write(&path, text)?;
    let code = run(["spatial-spectra", "--out", dir.join("out").to_str().unwrap(), "clt", "--config", path.to_str().unwrap()]);
    println!("exit code {code}");
    Ok(())
}
