//! Shapes dataset plus an oracle bank of ten variants per image, saved and
//! reloaded, with the label audit.

use genaug::samplebank::{audit_oracle_bank, build_bank, make_shapes_dataset, Generator, SampleBank};

fn main() -> genaug::Result<()> {
    let data = make_shapes_dataset(10, 20, 32, 7)?;
    let bank = build_bank(&data, Generator::Oracle, 10, 7)?;
    println!(
        "{} sources, {} variants, k = {}",
        bank.len(),
        bank.total_variants(),
        bank.k()
    );

    let path = std::env::temp_dir().join("genaug-example.gbnk");
    bank.save(&path)?;
    let back = SampleBank::load(&path)?;
    assert_eq!(back.to_bytes(), bank.to_bytes());
    println!("bank id {}", genaug::samplebank::short_hash(&bank.to_bytes()));

    let checked = audit_oracle_bank(&data, &back, 7)?;
    println!("{checked} variants keep their source label");
    Ok(())
}
