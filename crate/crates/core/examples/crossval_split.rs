//! Seeded k-fold partition of volume ids.

use spockmip::trainer::kfold_split;

pub fn run() -> spockmip::Result<()> {
    let ids: Vec<String> = (0..11).map(|i| format!("vol{i:02}")).collect();
    let folds = kfold_split(&ids, 5, 42)?;
    for (i, f) in folds.iter().enumerate() {
        println!("fold {i}: val {:?} ({} train)", f.val, f.train.len());
    }
    let mut seen: Vec<&String> = folds.iter().flat_map(|f| &f.val).collect();
    seen.sort();
    assert_eq!(seen, ids.iter().collect::<Vec<_>>());
    assert_eq!(kfold_split(&ids, 5, 42)?, folds);
    Ok(())
}

#[allow(dead_code)]
fn main() -> spockmip::Result<()> {
    run()
}
