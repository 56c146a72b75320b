//! The 33 DIBaS genera/species, in the order used for label values.

pub const SPECIES_COUNT: usize = 33;

/// Species names; label value `i + 1` is `SPECIES[i]`. The list is
/// alphabetical, which is also the order of the published per-species score
/// table. That table prints "Enterococcus faecium" for both entries 7 and 8;
/// entry 7 is faecalis in the dataset itself.
pub const SPECIES: [&str; SPECIES_COUNT] = [
    "Acinetobacter baumanii",
    "Actinomyces israeli",
    "Bacteroides fragilis",
    "Bifidobacterium spp",
    "Candida albicans",
    "Clostridium perfringens",
    "Enterococcus faecalis",
    "Enterococcus faecium",
    "Escherichia coli",
    "Fusobacterium",
    "Lactobacillus casei",
    "Lactobacillus crispatus",
    "Lactobacillus delbrueckii",
    "Lactobacillus gasseri",
    "Lactobacillus jehnsenii",
    "Lactobacillus johnsonii",
    "Lactobacillus paracasei",
    "Lactobacillus plantarum",
    "Lactobacillus reuteri",
    "Lactobacillus rhamnosus",
    "Lactobacillus salivarius",
    "Listeria monocytogenes",
    "Micrococcus spp",
    "Neisseria gonorrhoeae",
    "Porfyromonas gingivalis",
    "Propionibacterium acnes",
    "Proteus",
    "Pseudomonas aeruginosa",
    "Staphylococcus aureus",
    "Staphylococcus epidermidis",
    "Staphylococcus saprophiticus",
    "Streptococcus agalactiae",
    "Veionella",
];

/// Lowercases and collapses every run of non-alphanumerics into one space,
/// so `Acinetobacter.baumanii`, `acinetobacter_baumanii` and
/// `Acinetobacter baumanii` compare equal.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_space = false;
    for ch in name.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

/// 1-based label value of a species name, if it is one of the 33.
pub fn species_index(name: &str) -> Option<u8> {
    let key = normalize_name(name);
    SPECIES
        .iter()
        .position(|s| normalize_name(s) == key)
        .map(|i| i as u8 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_directory_spellings() {
        assert_eq!(species_index("Acinetobacter.baumanii"), Some(1));
        assert_eq!(species_index("enterococcus_faecalis"), Some(7));
        assert_eq!(species_index("Veionella"), Some(33));
        assert_eq!(species_index("Bacillus subtilis"), None);
    }

    #[test]
    fn list_is_sorted_and_unique() {
        let mut sorted = SPECIES.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, SPECIES.to_vec());
    }
}
