//! Regenerates the bundled scenario files from the in-code fixtures:
//! `cargo run -p resopf-core --example make_fixtures`

use resopf_core::network::to_json;
use std::path::Path;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir)?;
    let cases = [
        ("two_bus.json", resopf_core::fixtures::two_bus()),
        ("two_bus_lossy.json", resopf_core::fixtures::two_bus_lossy()),
        ("copper_plate.json", resopf_core::fixtures::copper_plate()),
        ("triangle3.json", resopf_core::fixtures::triangle3()),
        ("line_limit3.json", resopf_core::fixtures::line_limit3()),
        ("quad_cost2.json", resopf_core::fixtures::quad_cost2()),
        ("six_bus.json", resopf_core::fixtures::six_bus()),
        ("ieee57_shaped.json", resopf_core::fixtures::ieee57_shaped()),
    ];
    for (name, net) in cases {
        let path = dir.join(name);
        std::fs::write(&path, to_json(&net, None))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
