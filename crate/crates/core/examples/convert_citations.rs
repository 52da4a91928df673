// Convert a citation dataset in `.content` / `.cites` form into the
// graph text format and load it back.

use std::fs;

use fedgm::graph::load_graph;
use fedgm::harness::convert_planetoid;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("fedgm-convert-example-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    let mut content = String::new();
    for i in 0..30 {
        let topic = ["Databases", "Theory", "Vision"][i % 3];
        let words: Vec<&str> = (0..6).map(|w| if (i + w) % 3 == 0 { "1" } else { "0" }).collect();
        content.push_str(&format!("paper{i}\t{}\t{topic}\n", words.join("\t")));
    }
    let cites: String = (0..30)
        .map(|i| format!("paper{}\tpaper{i}\n", (i + 3) % 30))
        .chain(["paper0\tmissing\n".to_string()])
        .collect();
    fs::write(dir.join("toy.content"), content)?;
    fs::write(dir.join("toy.cites"), cites)?;

    let out = dir.join("toy.graph");
    let report = convert_planetoid(&dir, &out)?;
    println!("{report:?}");
    let g = load_graph(&out)?;
    println!("loaded {} nodes, {} edges", g.num_nodes(), g.num_edges());
    assert_eq!((g.num_nodes(), report.dangling_citations), (30, 1));
    fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
