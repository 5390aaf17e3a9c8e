//! Writes every built-in fixture into a directory (default `fixtures`).

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    duostep_core::fixtures::write_all(std::path::Path::new(&dir))?;
    println!("fixtures written to {dir}");
    Ok(())
}
