use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp;

use crate::model::{Timestamp, Topic, MS_PER_HOUR};
use crate::platform::{InboundItem, InboundKind};

use super::{IdSource, Population};

const TEMPLATES: &[&str] = &[
    "No más {kw} en nuestro país",
    "Harta de la {kw}",
    "La {kw} nos afecta a todos #{kw}",
    "¿Hasta cuándo la {kw}?",
    "Otro escándalo de {kw} en las noticias",
];

/// Keyword posts from the whole population as one Poisson process.
///
/// The superposition of per-agent processes is Poisson with the summed
/// rate, and each post's author is drawn in proportion to their rate.
#[derive(Debug, Clone)]
pub struct PublicPostGenerator {
    keywords: Vec<String>,
    gap: Option<Exp<f64>>,
    authors: Option<WeightedIndex<f64>>,
}

impl PublicPostGenerator {
    pub fn new(population: &Population, topics: &[Topic]) -> Self {
        let keywords = topics.iter().flat_map(|t| t.keywords.clone()).collect();
        let per_ms = population.total_post_rate() / MS_PER_HOUR as f64;
        let rates: Vec<f64> = population
            .agents
            .iter()
            .map(|a| population.profiles[a.profile].post_rate)
            .collect();
        PublicPostGenerator {
            keywords,
            gap: (per_ms > 0.0).then(|| Exp::new(per_ms).expect("positive rate")),
            authors: WeightedIndex::new(rates).ok(),
        }
    }

    /// The first post strictly after `from`. By memorylessness this is also
    /// the correct continuation when nobody listened up to `from`.
    pub fn next_after<R: Rng + ?Sized>(
        &self,
        population: &Population,
        from: Timestamp,
        rng: &mut R,
        ids: &mut IdSource,
    ) -> Option<InboundItem> {
        let (gap, authors) = (self.gap.as_ref()?, self.authors.as_ref()?);
        if self.keywords.is_empty() {
            return None;
        }
        let timestamp = from + gap.sample(rng).ceil().max(1.0) as i64;
        let author = population.agents[authors.sample(rng)].user_id.clone();
        let mut keyword = self.keywords[rng.random_range(0..self.keywords.len())].clone();
        if rng.random_bool(0.3) {
            keyword = capitalize(&keyword);
        }
        let text = TEMPLATES[rng.random_range(0..TEMPLATES.len())].replace("{kw}", &keyword);
        Some(InboundItem {
            seq: 0,
            kind: InboundKind::PublicPost,
            author,
            message_id: ids.post(),
            in_reply_to: None,
            text,
            timestamp,
        })
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// All posts in `(from, until]`.
pub fn generate_public_posts<R: Rng + ?Sized>(
    population: &Population,
    topics: &[Topic],
    from: Timestamp,
    until: Timestamp,
    rng: &mut R,
) -> Vec<InboundItem> {
    let generator = PublicPostGenerator::new(population, topics);
    let mut ids = IdSource::default();
    let mut out = Vec::new();
    let mut t = from;
    while let Some(post) = generator.next_after(population, t, rng, &mut ids) {
        if post.timestamp > until {
            break;
        }
        t = post.timestamp;
        out.push(post);
    }
    out
}
