//! Named configurations reproducing the data behind each figure. Grid extents
//! not stated in the text are read off the plotted axes.

use crate::config::{parse_config_str, ExperimentConfig};
use crate::error::CliError;

pub struct Preset {
    pub name: &'static str,
    /// One line for `spinlock presets`; says when the grid is a reconstruction.
    pub summary: &'static str,
    pub json: &'static str,
}

pub const PRESETS: [Preset; 9] = [
    Preset {
        name: "fig2",
        summary: "free relaxation from |1>, then the resonant drive",
        json: include_str!("../presets/fig2.json"),
    },
    Preset {
        name: "fig3c",
        summary: "max S against detuning at 1.87 Gamma_g (detuning range reconstructed)",
        json: include_str!("../presets/fig3c.json"),
    },
    Preset {
        name: "fig3d",
        summary: "Arnold tongue over detuning and strength (grid reconstructed)",
        json: include_str!("../presets/fig3d.json"),
    },
    Preset {
        name: "fig4a",
        summary: "deformation up to 50 Gamma_g (grid reconstructed)",
        json: include_str!("../presets/fig4a.json"),
    },
    Preset {
        name: "fig4b",
        summary: "max S against strength around the critical value (grid reconstructed)",
        json: include_str!("../presets/fig4b.json"),
    },
    Preset {
        name: "fig4c",
        summary: "m_z from the limit cycle at 1.87, 3.75 and 28.7 Gamma_g (duration reconstructed)",
        json: include_str!("../presets/fig4c.json"),
    },
    Preset {
        name: "figS2",
        summary: "simulated rate-extraction protocol at 500 shots per point",
        json: include_str!("../presets/figS2.json"),
    },
    Preset {
        name: "figS5",
        summary: "lab-frame spectra with the drive on resonance, 5 Gamma_g below and 10 Gamma_g above",
        json: include_str!("../presets/figS5.json"),
    },
    Preset {
        name: "figS6",
        summary: "lab-frame response to a pi/2 shift of the drive phase",
        json: include_str!("../presets/figS6.json"),
    },
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.name)
}

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let p = PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        CliError::validation("preset", format!("unknown preset `{name}`, expected one of {}", names().collect::<Vec<_>>().join(", ")))
    })?;
    parse_config_str(p.json, &format!("preset {name}"))
}
