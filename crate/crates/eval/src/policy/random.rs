use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shopsim_core::text;

use super::{instruction_of, EpisodeInfo, Policy, PolicyContext, PolicyError, PolicyFactory};

/// Searches a random handful of instruction words, then clicks uniformly
/// at random among the clickable buttons. Never talks to the shopper.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, ctx: &PolicyContext<'_>) -> Result<String, PolicyError> {
        let obs = ctx.observation;
        if obs.search_available {
            let words = text::basic_tokens(instruction_of(obs));
            if words.is_empty() {
                return Ok("search[product]".into());
            }
            let k = self.rng.gen_range(1..=words.len().min(4));
            let picked: Vec<&String> = words.choose_multiple(&mut self.rng, k).collect();
            let query: Vec<&str> = picked.iter().map(|s| s.as_str()).collect();
            return Ok(format!("search[{}]", query.join(" ")));
        }
        match obs.clickable.choose(&mut self.rng) {
            Some(button) => Ok(format!("click[{button}]")),
            None => Err(PolicyError::Other("no clickable buttons".into())),
        }
    }
}

pub struct RandomFactory;

impl PolicyFactory for RandomFactory {
    fn name(&self) -> String {
        "random".into()
    }

    fn build(&self, episode: &EpisodeInfo<'_>) -> Box<dyn Policy> {
        Box::new(RandomPolicy::new(episode.seed))
    }
}
