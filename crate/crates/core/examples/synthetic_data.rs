//! Writes synthetic hourly price and temperature traces for summers
//! 2018–2020 into a directory (default `data/`).

use std::path::PathBuf;

use chillplan_core::ingest::Window;
use chillplan_core::scenario::{DiurnalTemperature, PeakPriceMarket};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    let span = Window::new(Window::summer(2018)?.start, Window::summer(2020)?.end)?;
    PeakPriceMarket::default()
        .generate(1, span.start, span.hours())?
        .write_csv(dir.join("price.csv"))?;
    DiurnalTemperature::default()
        .generate(2, span.start, span.hours())?
        .write_csv(dir.join("temperature.csv"))?;
    println!("wrote {} hours to {}", span.hours(), dir.display());
    Ok(())
}
