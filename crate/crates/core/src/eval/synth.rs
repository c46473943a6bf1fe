//! Synthetic labeled corpus with a matching stub script.
//!
//! Each pair starts from a catalog product and applies one perturbation with
//! a known effect on equivalence. The questions a pair gets depend only on the
//! product, the perturbation and the values involved, so recurring
//! combinations produce recurring question sets (and so exercise trace reuse).

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetRecord;
use crate::model::{MatchDimension, MatchLabel};
use crate::provider::StubScript;
use crate::scenario::{stub_script, ScriptedPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub n_pairs: usize,
    pub seed: u64,
    /// Fraction of rows whose dataset label is flipped, mimicking annotation
    /// errors. Scripted verdicts still follow the true label.
    pub label_noise: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            seed: 17,
            label_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Same listing, reordered or with rewritten units.
    Cosmetic,
    /// Retailer boilerplate appended.
    RetailerNote,
    /// Country-of-origin descriptor added.
    Origin,
    /// Brand omitted on one side.
    BrandOmitted,
    VariantSwap,
    SizeChange,
    BundleChange,
    BrandSwap,
}

impl Perturbation {
    const ALL: [Perturbation; 8] = [
        Perturbation::Cosmetic,
        Perturbation::RetailerNote,
        Perturbation::Origin,
        Perturbation::BrandOmitted,
        Perturbation::VariantSwap,
        Perturbation::SizeChange,
        Perturbation::BundleChange,
        Perturbation::BrandSwap,
    ];

    pub fn label(self) -> MatchLabel {
        match self {
            Perturbation::Cosmetic
            | Perturbation::RetailerNote
            | Perturbation::Origin
            | Perturbation::BrandOmitted => MatchLabel::Equivalent,
            _ => MatchLabel::NonEquivalent,
        }
    }
}

struct Product {
    brand: &'static str,
    line: &'static str,
    variants: &'static [&'static str],
    size: (u32, &'static str),
    packs: &'static [u32],
}

const CATALOG: &[Product] = &[
    Product { brand: "Coca Cola", line: "Zero Sugar", variants: &["Original", "Cherry", "Vanilla"], size: (500, "ml"), packs: &[1, 6, 12] },
    Product { brand: "Pepsi", line: "Max", variants: &["Original", "Lime", "Mango"], size: (330, "ml"), packs: &[6, 12, 24] },
    Product { brand: "Nongshim", line: "Shin Ramyun", variants: &["Original", "Black", "Light"], size: (120, "g"), packs: &[1, 5, 10] },
    Product { brand: "Ottogi", line: "Jin Ramen", variants: &["Mild", "Spicy"], size: (120, "g"), packs: &[1, 5] },
    Product { brand: "Centrum", line: "Silver Multivitamin", variants: &["Men", "Women"], size: (100, "tablets"), packs: &[1, 2] },
    Product { brand: "Nature Made", line: "Vitamin D3", variants: &["1000IU", "2000IU"], size: (90, "softgels"), packs: &[1, 2, 3] },
    Product { brand: "Korea Eundan", line: "MegaDoseD Vitamin D3", variants: &["4000IU", "2000IU"], size: (120, "tablets"), packs: &[1, 3] },
    Product { brand: "Dove", line: "Beauty Bar", variants: &["Original", "Sensitive", "Shea Butter"], size: (90, "g"), packs: &[1, 4, 6] },
    Product { brand: "Colgate", line: "Total Whitening Toothpaste", variants: &["Mint", "Charcoal"], size: (150, "g"), packs: &[1, 2, 3] },
    Product { brand: "Maeil", line: "Barista Rules Latte", variants: &["Espresso", "Vanilla"], size: (250, "ml"), packs: &[1, 10] },
    Product { brand: "Binggrae", line: "Banana Milk", variants: &["Banana", "Strawberry", "Melon"], size: (240, "ml"), packs: &[1, 4, 8] },
    Product { brand: "Orion", line: "Choco Pie", variants: &["Original", "Strawberry"], size: (468, "g"), packs: &[1, 2] },
    Product { brand: "Lotte", line: "Pepero", variants: &["Original", "Almond", "Nude"], size: (47, "g"), packs: &[1, 8] },
    Product { brand: "Nestle", line: "Nescafe Gold Blend", variants: &["Original", "Decaf"], size: (200, "g"), packs: &[1, 2] },
    Product { brand: "CJ", line: "Hetbahn Cooked Rice", variants: &["White", "Multigrain"], size: (210, "g"), packs: &[1, 12, 24] },
    Product { brand: "Samsung", line: "Galaxy Buds2 Pro", variants: &["Graphite", "White", "Bora Purple"], size: (1, "set"), packs: &[1] },
];

const RETAILER_NOTES: &[&str] = &["Official Store", "Free Shipping", "Best Seller"];
const ORIGINS: &[&str] = &["Swiss-made", "Imported", "Made in Korea"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    Plain,
    PackFirst,
    Comma,
}

struct Listing<'a> {
    p: &'a Product,
    variant: &'a str,
    size: u32,
    pack: u32,
    show_brand: bool,
    metric_rewrite: bool,
    style: Style,
    suffix: Option<&'a str>,
    brand_override: Option<&'a str>,
}

impl<'a> Listing<'a> {
    fn new(p: &'a Product, variant: &'a str, pack: u32) -> Self {
        Self {
            p,
            variant,
            size: p.size.0,
            pack,
            show_brand: true,
            metric_rewrite: false,
            style: Style::Plain,
            suffix: None,
            brand_override: None,
        }
    }

    fn size_text(&self) -> String {
        let (v, unit) = (self.size, self.p.size.1);
        match unit {
            "ml" if self.metric_rewrite && v % 100 == 0 => format!("{}L", v as f64 / 1000.0),
            "g" if self.metric_rewrite && v % 100 == 0 => format!("{}kg", v as f64 / 1000.0),
            "ml" | "g" => format!("{v}{unit}"),
            "set" => String::new(),
            _ => format!("{v} {unit}"),
        }
    }

    fn render(&self) -> String {
        let brand = self.brand_override.unwrap_or(self.p.brand);
        let mut head = Vec::new();
        if self.show_brand {
            head.push(brand.to_string());
        }
        head.push(self.p.line.to_string());
        head.push(self.variant.to_string());
        let size = self.size_text();
        let mut title = head.join(" ");
        match (self.style, self.pack) {
            (_, 1) if size.is_empty() => {}
            (_, 1) => title = format!("{title} {size}"),
            (Style::PackFirst, n) if !size.is_empty() => title = format!("{title} {n} x {size}"),
            (Style::Comma, n) if !size.is_empty() => title = format!("{title}, {size} x {n}"),
            (_, n) if size.is_empty() => title = format!("{title} x {n}"),
            (_, n) => title = format!("{title} {size} x {n}"),
        }
        if let Some(s) = self.suffix {
            title = format!("{title} {s}");
        }
        title
    }
}

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub record: DatasetRecord,
    pub perturbation: Perturbation,
    pub true_label: MatchLabel,
    pub noisy: bool,
    pub script: ScriptedPair,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub pairs: Vec<SynthPair>,
}

impl SynthCorpus {
    pub fn records(&self) -> Vec<DatasetRecord> {
        self.pairs.iter().map(|p| p.record.clone()).collect()
    }

    pub fn stub_script(&self) -> StubScript {
        let scripted: Vec<ScriptedPair> = self.pairs.iter().map(|p| p.script.clone()).collect();
        stub_script(&scripted)
    }
}

fn other<'a, R: Rng>(rng: &mut R, items: &'a [&'a str], not: &str) -> Option<&'a str> {
    let pool: Vec<&&str> = items.iter().filter(|v| **v != not).collect();
    pool.choose(rng).map(|v| **v)
}

pub fn generate(opts: &SynthOptions) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut pairs = Vec::with_capacity(opts.n_pairs);
    while pairs.len() < opts.n_pairs {
        let p = &CATALOG[rng.random_range(0..CATALOG.len())];
        let kind = Perturbation::ALL[rng.random_range(0..Perturbation::ALL.len())];
        let variant = *p.variants.choose(&mut rng).expect("variants");
        let pack = *p.packs.choose(&mut rng).expect("packs");
        let base = Listing::new(p, variant, pack);
        let mut cmp = Listing::new(p, variant, pack);
        let name = format!("{} {}", p.brand, p.line);
        let mut questions: Vec<(MatchDimension, String, String)> = Vec::new();
        let mut confidence = 0.9;

        match kind {
            Perturbation::Cosmetic => {
                cmp.style = if rng.random_bool(0.5) { Style::PackFirst } else { Style::Comma };
                cmp.metric_rewrite = rng.random_bool(0.5);
            }
            Perturbation::RetailerNote => {
                let note = *RETAILER_NOTES.choose(&mut rng).expect("notes");
                cmp.suffix = Some(note);
                questions.push((
                    MatchDimension::CoreProductName,
                    format!("Is '{note}' part of the product name of {name}?"),
                    format!("No. '{note}' is marketplace wording, not part of the {name} product name."),
                ));
            }
            Perturbation::Origin => {
                let origin = *ORIGINS.choose(&mut rng).expect("origins");
                cmp.suffix = Some(origin);
                questions.push((
                    MatchDimension::Specification,
                    format!("Does '{origin}' identify a different formulation of {name}?"),
                    format!("No. The manufacturer sells a single {name} formulation; '{origin}' describes origin only."),
                ));
            }
            Perturbation::BrandOmitted => {
                cmp.show_brand = false;
                confidence = 0.65;
                questions.push((
                    MatchDimension::Brand,
                    format!("Is '{}' a product line of the {} brand?", p.line, p.brand),
                    format!("Yes. {} is sold under the {} brand.", p.line, p.brand),
                ));
            }
            Perturbation::VariantSwap => {
                let Some(v2) = other(&mut rng, p.variants, variant) else { continue };
                cmp.variant = v2;
                questions.push((
                    MatchDimension::Variant,
                    format!("Are '{variant}' and '{v2}' distinct variants of {name}?"),
                    format!("Yes. {name} {variant} and {name} {v2} are separate variants with their own SKUs."),
                ));
            }
            Perturbation::SizeChange => {
                if p.size.1 == "set" {
                    continue;
                }
                let factor = *[2u32, 3].choose(&mut rng).expect("factors");
                cmp.size = p.size.0 * factor;
                let unit = p.size.1;
                questions.push((
                    MatchDimension::Specification,
                    format!("Is {name} sold as separate {}{unit} and {}{unit} products?", base.size, cmp.size),
                    format!("Yes. The {}{unit} and {}{unit} sizes are listed as separate products.", base.size, cmp.size),
                ));
            }
            Perturbation::BundleChange => {
                let packs: Vec<String> = p.packs.iter().map(|n| n.to_string()).collect();
                let packs: Vec<&str> = packs.iter().map(String::as_str).collect();
                let Some(n2) = other(&mut rng, &packs, &pack.to_string()) else { continue };
                cmp.pack = n2.parse().expect("pack count");
                questions.push((
                    MatchDimension::Quantity,
                    format!("Do packs of {pack} and {n2} units of {name} share one SKU?"),
                    format!("No. Each pack configuration of {name} carries its own SKU."),
                ));
            }
            Perturbation::BrandSwap => {
                let q = &CATALOG[rng.random_range(0..CATALOG.len())];
                if q.brand == p.brand {
                    continue;
                }
                cmp.brand_override = Some(q.brand);
                questions.push((
                    MatchDimension::Brand,
                    format!("Are {} and {} the same brand?", p.brand, q.brand),
                    format!("No. {} and {} are unrelated brands.", p.brand, q.brand),
                ));
                questions.push((
                    MatchDimension::CoreProductName,
                    format!("Does {} sell a product called {}?", q.brand, p.line),
                    format!("No product named {} appears in the {} catalog.", p.line, q.brand),
                ));
            }
        }

        let (b, c) = (base.render(), cmp.render());
        if b == c && kind != Perturbation::Cosmetic {
            continue;
        }
        let truth = kind.label();
        let index = pairs.len();
        let mut script = ScriptedPair::agreeing(&b, &c, truth);
        script.confidence = confidence;
        for (d, q, a) in &questions {
            script = script.question(*d, q, a);
        }
        // The single-call baselines stumble on the cases that need evidence.
        let flip = |l: MatchLabel| match l {
            MatchLabel::Equivalent => MatchLabel::NonEquivalent,
            MatchLabel::NonEquivalent => MatchLabel::Equivalent,
        };
        match kind {
            Perturbation::BundleChange => {
                script.zero_shot = flip(truth);
                script.few_shot = flip(truth);
                if index % 2 == 1 {
                    script.web_search = flip(truth);
                }
            }
            Perturbation::Origin | Perturbation::BrandOmitted => {
                script.zero_shot = flip(truth);
                if index % 3 == 0 {
                    script.few_shot = flip(truth);
                }
            }
            _ => {}
        }
        pairs.push(SynthPair {
            record: DatasetRecord {
                base_product: b,
                compared_product: c,
                label: truth.as_bit(),
            },
            perturbation: kind,
            true_label: truth,
            noisy: false,
            script,
        });
    }

    let n_noisy = (opts.label_noise.clamp(0.0, 1.0) * pairs.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n_noisy] {
        let p = &mut pairs[i];
        p.record.label = 1 - p.record.label;
        p.noisy = true;
    }
    SynthCorpus { pairs }
}
