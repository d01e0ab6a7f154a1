use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_icegnn"));
    c.env("RUST_LOG", "warn");
    for (k, _) in std::env::vars() {
        if k.starts_with("ICEGNN_") {
            c.env_remove(k);
        }
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// A mask with `layers + 1` white rows in every column and its track.
pub fn write_echogram(masks: &Path, tracks: &Path, stem: &str, layers: usize, width: u32) {
    let tops: Vec<u32> = (0..=layers as u32).map(|k| 4 + 6 * k + (k * k) % 5).collect();
    let height = tops.last().unwrap() + 5;
    let img = image::GrayImage::from_fn(width, height, |_, y| {
        image::Luma([if tops.contains(&y) { 255 } else { 0 }])
    });
    img.save(masks.join(format!("{stem}.png"))).unwrap();
    let mut csv = String::from("column_index,lat,lon\n");
    for c in 0..width {
        let f = c as f64;
        csv.push_str(&format!("{c},{},{}\n", 69.5 + 1.3e-4 * f, -39.0 + 2.1e-4 * f));
    }
    std::fs::write(tracks.join(format!("{stem}.csv")), csv).unwrap();
}

/// The 20/19/25-layer corpus; returns the mask and track directories.
pub fn three_file_corpus(root: &Path) -> (PathBuf, PathBuf) {
    let masks = root.join("masks");
    let tracks = root.join("tracks");
    std::fs::create_dir_all(&masks).unwrap();
    std::fs::create_dir_all(&tracks).unwrap();
    for (stem, layers) in [("echo-a", 20), ("echo-b", 19), ("echo-c", 25)] {
        write_echogram(&masks, &tracks, stem, layers, 12);
    }
    (masks, tracks)
}

/// Contents of every file directly inside `dir`, sorted by name.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

pub const TINY_CONFIG: &str = r#"
epochs = 4
trials = 2
hidden = 6
fc1 = 5
fc2 = 4

[synthetic]
n_records = 8
n_nodes = 6
"#;
