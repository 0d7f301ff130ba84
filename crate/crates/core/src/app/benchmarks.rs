//! Shipped benchmark configurations.

use crate::app::config::{ConfigDocument, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Integrator,
    IntegratorTwoLayer,
    SpacecraftAligned,
    SpacecraftDisaligned,
    Toy1d,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Integrator,
        Benchmark::IntegratorTwoLayer,
        Benchmark::SpacecraftAligned,
        Benchmark::SpacecraftDisaligned,
        Benchmark::Toy1d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Integrator => "integrator",
            Benchmark::IntegratorTwoLayer => "integrator_two_layer",
            Benchmark::SpacecraftAligned => "spacecraft_aligned",
            Benchmark::SpacecraftDisaligned => "spacecraft_disaligned",
            Benchmark::Toy1d => "toy_1d",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Benchmark::Integrator => include_str!("../../configs/integrator.toml"),
            Benchmark::IntegratorTwoLayer => include_str!("../../configs/integrator_two_layer.toml"),
            Benchmark::SpacecraftAligned => include_str!("../../configs/spacecraft_aligned.toml"),
            Benchmark::SpacecraftDisaligned => {
                include_str!("../../configs/spacecraft_disaligned.toml")
            }
            Benchmark::Toy1d => include_str!("../../configs/toy_1d.toml"),
        }
    }

    /// The raw document, for callers that tweak fields before validation.
    pub fn document(self) -> Result<ConfigDocument> {
        toml::from_str(self.source()).map_err(|e| Error::config(self.name(), e.to_string()))
    }

    pub fn config(self) -> Result<RunConfig> {
        RunConfig::from_document(self.document()?, None)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }
}
