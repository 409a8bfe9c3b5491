//! Token counting and run cost estimates.

use serde::{Deserialize, Serialize};

/// Counts tokens with the `cl100k_base` encoding used by the gpt-3.5 family.
pub fn count_tokens(text: &str) -> u64 {
    tiktoken_rs::cl100k_base_singleton()
        .encode_with_special_tokens(text)
        .len() as u64
}

/// Per-1k-token prices in a single currency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub per_1k_input: f64,
    pub per_1k_output: f64,
}

impl Pricing {
    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        (input_tokens as f64 * self.per_1k_input + output_tokens as f64 * self.per_1k_output) / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub comments: u64,
    pub categories: u64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
}

impl RunPlan {
    pub fn requests(&self) -> u64 {
        self.comments * self.categories
    }
}

/// `requests × (in × in_price + out × out_price) / 1000`.
pub fn estimate_cost(plan: &RunPlan, pricing: &Pricing) -> f64 {
    let per_request =
        (plan.mean_input_tokens * pricing.per_1k_input + plan.mean_output_tokens * pricing.per_1k_output) / 1000.0;
    plan.requests() as f64 * per_request
}
