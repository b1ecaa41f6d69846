//! Queen contiguity from polygons, the connectivity summary and a GAL round trip.
//!
//! ```text
//! cargo run --example queen_weights [-- regions.geojson]
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use regiostat::weights::{connectivity_summary, load_gal, load_geojson, queen_contiguity, rook_contiguity, save_gal, GalHeader};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/regions.geojson"));
    let regions = load_geojson(BufReader::new(File::open(&path)?), "code")?;
    let queen = queen_contiguity(&regions)?;
    let rook = rook_contiguity(&regions)?;

    for (name, w) in [("queen", &queen), ("rook", &rook)] {
        let s = connectivity_summary(w);
        println!(
            "{name:<6} n={} links={} min={} max={} mean={:.2} median={} nonzero={:.2}% isolates={}",
            s.n_regions,
            w.n_links(),
            s.min_neighbors,
            s.max_neighbors,
            s.mean_neighbors,
            s.median_neighbors,
            s.pct_nonzero,
            w.isolates().len()
        );
    }

    let first = &queen.ids()[0];
    let names: Vec<&str> = queen.neighbors(0).iter().map(|(j, _)| queen.ids()[*j].as_str()).collect();
    println!("neighbors of {first}: {}", names.join(" "));

    let header = GalHeader {
        layer: Some("regions".into()),
        id_variable: Some("code".into()),
    };
    let mut gal = Vec::new();
    save_gal(&queen, &header, &mut gal)?;
    let (back, _) = load_gal(gal.as_slice())?;
    let mut again = Vec::new();
    save_gal(&back, &header, &mut again)?;
    println!("GAL: {} bytes, round trip identical: {}", gal.len(), gal == again);
    Ok(())
}
