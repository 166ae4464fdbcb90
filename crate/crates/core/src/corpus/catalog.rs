//! Architecture metadata for the evaluated model variants.
//!
//! Parameter counts are the nominal sizes (e.g. "~124M" is stored as
//! 124,000,000); they are used only on a log10 axis.

use super::bundle::ModelMeta;
pub use super::FULLY_TRAINED_STEPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantSpec {
    pub name: &'static str,
    pub family: &'static str,
    pub n_layers: u32,
    pub n_heads: u32,
    pub d_model: usize,
    pub parameter_count: u64,
}

impl VariantSpec {
    pub fn meta(&self, training_steps: u64) -> ModelMeta {
        ModelMeta {
            model_name: self.name.to_string(),
            family: self.family.to_string(),
            parameter_count: self.parameter_count,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            training_steps,
            init_seed: None,
        }
    }
}

const M: u64 = 1_000_000;
const B: u64 = 1_000_000_000;

const fn v(
    name: &'static str,
    family: &'static str,
    n_layers: u32,
    n_heads: u32,
    d_model: usize,
    parameter_count: u64,
) -> VariantSpec {
    VariantSpec {
        name,
        family,
        n_layers,
        n_heads,
        d_model,
        parameter_count,
    }
}

pub const VARIANTS: [VariantSpec; 24] = [
    v("GPT-2 Small", "GPT-2", 12, 12, 768, 124 * M),
    v("GPT-2 Medium", "GPT-2", 24, 16, 1024, 355 * M),
    v("GPT-2 Large", "GPT-2", 36, 20, 1280, 774 * M),
    v("GPT-2 XL", "GPT-2", 48, 25, 1600, 1_600 * M),
    v("GPT-Neo 125M", "GPT-Neo", 12, 12, 768, 125 * M),
    v("GPT-Neo 1.3B", "GPT-Neo", 24, 16, 2048, 1_300 * M),
    v("GPT-Neo 2.7B", "GPT-Neo", 32, 20, 2560, 2_700 * M),
    v("GPT-J 6B", "GPT-Neo", 28, 16, 4096, 6 * B),
    v("GPT-NeoX 20B", "GPT-Neo", 44, 64, 6144, 20 * B),
    v("OPT 125M", "OPT", 12, 12, 768, 125 * M),
    v("OPT 1.3B", "OPT", 24, 32, 2048, 1_300 * M),
    v("OPT 2.7B", "OPT", 32, 32, 2560, 2_700 * M),
    v("OPT 6.7B", "OPT", 32, 32, 4096, 6_700 * M),
    v("OPT 13B", "OPT", 40, 40, 5120, 13 * B),
    v("OPT 30B", "OPT", 48, 56, 7168, 30 * B),
    v("OPT 66B", "OPT", 64, 72, 9216, 66 * B),
    v("Pythia 70M", "Pythia", 6, 8, 512, 70 * M),
    v("Pythia 160M", "Pythia", 12, 12, 768, 160 * M),
    v("Pythia 410M", "Pythia", 24, 16, 1024, 410 * M),
    v("Pythia 1B", "Pythia", 16, 8, 2048, B),
    v("Pythia 1.4B", "Pythia", 24, 16, 2048, 1_400 * M),
    v("Pythia 2.8B", "Pythia", 32, 32, 2560, 2_800 * M),
    v("Pythia 6.9B", "Pythia", 32, 32, 4096, 6_900 * M),
    v("Pythia 12B", "Pythia", 36, 40, 5120, 12 * B),
];

/// Case-insensitive lookup by display name.
pub fn lookup(name: &str) -> Option<&'static VariantSpec> {
    VARIANTS.iter().find(|v| v.name.eq_ignore_ascii_case(name))
}

pub fn family(name: &str) -> impl Iterator<Item = &'static VariantSpec> + '_ {
    VARIANTS.iter().filter(move |v| v.family.eq_ignore_ascii_case(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_rows() {
        assert_eq!(family("Pythia").count(), 8);
        assert_eq!(family("OPT").count(), 7);
        let opt66 = lookup("opt 66b").unwrap();
        assert_eq!((opt66.n_layers, opt66.n_heads, opt66.d_model), (64, 72, 9216));
        assert_eq!(lookup("Pythia 70M").unwrap().d_model, 512);
        // OPT-350M is deliberately absent (final-layer width differs from its internal width).
        assert!(lookup("OPT 350M").is_none());
    }
}
