//! A small sweep in the layout of the comparison tables.

use netum::{emit_report, run_bench, BenchConfig, GridCell, ReportFormat};

fn main() -> netum::Result<()> {
    let mut grid = Vec::new();
    for eps in [1e-2, 5e-3] {
        for (n, m) in [(10, 10), (10, 20)] {
            grid.push(GridCell { n, m, eps });
        }
    }
    let mut cfg = BenchConfig::new(grid);
    cfg.b_min = 0.5;
    cfg.b_max = 1.5;
    let records = run_bench(&cfg, 1)?;
    print!("{}", emit_report(&records, ReportFormat::Markdown)?);
    Ok(())
}
