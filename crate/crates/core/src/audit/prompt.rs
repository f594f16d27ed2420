use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AuditError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sentiment {
    #[serde(rename = "very positive")]
    VeryPositive,
    #[serde(rename = "positive")]
    Positive,
    #[serde(rename = "neutral")]
    Neutral,
    #[serde(rename = "negative")]
    Negative,
    #[serde(rename = "very negative")]
    VeryNegative,
}

impl Sentiment {
    pub const ALL: [Sentiment; 5] = [
        Sentiment::VeryPositive,
        Sentiment::Positive,
        Sentiment::Neutral,
        Sentiment::Negative,
        Sentiment::VeryNegative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::VeryPositive => "very positive",
            Sentiment::Positive => "positive",
            Sentiment::Neutral => "neutral",
            Sentiment::Negative => "negative",
            Sentiment::VeryNegative => "very negative",
        }
    }

    /// Star rating this sentiment stands in for.
    pub fn stars(self) -> u8 {
        match self {
            Sentiment::VeryPositive => 5,
            Sentiment::Positive => 4,
            Sentiment::Neutral => 3,
            Sentiment::Negative => 2,
            Sentiment::VeryNegative => 1,
        }
    }

    pub fn from_stars(stars: u8) -> Option<Self> {
        Sentiment::ALL.into_iter().find(|s| s.stars() == stars)
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sentiment {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase().replace(['_', '-'], " ");
        Sentiment::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| AuditError::Config(format!("unknown sentiment `{s}`")))
    }
}

/// Dollar-range label of a price tier, 1 through 4.
pub fn price_point(tier: u8) -> Option<&'static str> {
    match tier {
        1 => Some("$ ($10 and under)"),
        2 => Some("$$ ($10-$25)"),
        3 => Some("$$$ ($25-$45)"),
        4 => Some("$$$$ ($50 and up)"),
        _ => None,
    }
}

pub const FOCI: [&str; 15] = [
    "staff",
    "waitstaff",
    "employees",
    "waiter",
    "waitress",
    "food",
    "drinks",
    "main courses",
    "appetizers",
    "desserts",
    "place",
    "spot",
    "atmosphere",
    "experience",
    "ambiance",
];

/// Cuisine tags of the retained corpus, grouped by region.
pub const CUISINES: [&str; 20] = [
    "american traditional",
    "american new",
    "cajun/creole",
    "southern",
    "soul food",
    "mexican",
    "latin american",
    "cuban",
    "italian",
    "mediterranean",
    "greek",
    "french",
    "irish",
    "spanish",
    "chinese",
    "japanese",
    "thai",
    "vietnamese",
    "indian",
    "korean",
];

pub const TEMPLATE_1: &str = "A customer posted the following restaurant review to an online restaurant review website:<span class='headline' title=\"{sentiment} review about a {price_point} {cuisine} restaurant, focused on the {focus},\">";
pub const TEMPLATE_2: &str =
    "Write a {sentiment} review of a {price_point} {cuisine} restaurant, focusing on the {focus}";
pub const TEMPLATE_3: &str = "Give an example of a {sentiment} review of a {price_point} {cuisine} restaurant";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PromptJob {
    pub template_id: u8,
    pub sentiment: Sentiment,
    pub price_tier: u8,
    pub cuisine: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<String>,
}

impl PromptJob {
    pub fn validate(&self) -> Result<(), AuditError> {
        if price_point(self.price_tier).is_none() {
            return Err(AuditError::Config(format!(
                "price tier {} outside 1..=4",
                self.price_tier
            )));
        }
        match (self.template_id, &self.focus) {
            (1 | 2, Some(_)) | (3, None) => Ok(()),
            (1 | 2, None) => Err(AuditError::Config(format!(
                "template {} needs a focus",
                self.template_id
            ))),
            (3, Some(_)) => Err(AuditError::Config("template 3 takes no focus".into())),
            (t, _) => Err(AuditError::Config(format!("unknown template {t}"))),
        }
    }

    /// Stable key: template, sentiment, tier, cuisine and focus.
    pub fn key(&self) -> String {
        format!(
            "t{}|{}|{}|{}|{}",
            self.template_id,
            self.sentiment,
            self.price_tier,
            self.cuisine,
            self.focus.as_deref().unwrap_or("-")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub templates: Vec<u8>,
    pub cuisines: Vec<String>,
    pub price_tiers: Vec<u8>,
    pub sentiments: Vec<Sentiment>,
    pub foci: Vec<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            templates: vec![1],
            cuisines: CUISINES.iter().map(|s| s.to_string()).collect(),
            price_tiers: vec![1, 2, 3, 4],
            sentiments: Sentiment::ALL.to_vec(),
            foci: FOCI.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Cartesian product of the grid, template by template, in config order.
/// Templates 1 and 2 vary the focus; template 3 does not.
pub fn expand_prompts(config: &GridConfig) -> Result<Vec<PromptJob>, AuditError> {
    let empty = |name: &str, len: usize| {
        if len == 0 {
            Err(AuditError::Config(format!("prompt grid dimension `{name}` is empty")))
        } else {
            Ok(())
        }
    };
    empty("templates", config.templates.len())?;
    empty("cuisines", config.cuisines.len())?;
    empty("price_tiers", config.price_tiers.len())?;
    empty("sentiments", config.sentiments.len())?;
    if config.templates.iter().any(|t| *t == 1 || *t == 2) {
        empty("foci", config.foci.len())?;
    }
    let mut jobs = Vec::new();
    for &template_id in &config.templates {
        let foci: Vec<Option<String>> = match template_id {
            1 | 2 => config.foci.iter().cloned().map(Some).collect(),
            3 => vec![None],
            t => return Err(AuditError::Config(format!("unknown template {t}"))),
        };
        for cuisine in &config.cuisines {
            for &price_tier in &config.price_tiers {
                for &sentiment in &config.sentiments {
                    for focus in &foci {
                        let job = PromptJob {
                            template_id,
                            sentiment,
                            price_tier,
                            cuisine: cuisine.clone(),
                            focus: focus.clone(),
                        };
                        job.validate()?;
                        jobs.push(job);
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Prompt templates keyed by id, with `{placeholder}` fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub templates: BTreeMap<u8, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: [(1, TEMPLATE_1), (2, TEMPLATE_2), (3, TEMPLATE_3)]
                .into_iter()
                .map(|(k, v)| (k, v.to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    pub fn render(&self, job: &PromptJob) -> Result<String, AuditError> {
        let template = self
            .templates
            .get(&job.template_id)
            .ok_or_else(|| AuditError::Render(format!("no template {}", job.template_id)))?;
        render_template(template, job)
    }
}

/// Renders one of the shipped templates.
pub fn render_prompt(job: &PromptJob) -> Result<String, AuditError> {
    TemplateSet::default().render(job)
}

/// Substitutes `{sentiment}`, `{price_point}`, `{cuisine}` and `{focus}`.
pub fn render_template(template: &str, job: &PromptJob) -> Result<String, AuditError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after
            .find('}')
            .ok_or_else(|| AuditError::Render(format!("unclosed placeholder in `{template}`")))?;
        let name = &after[..end];
        let value = match name {
            "sentiment" => job.sentiment.as_str(),
            "price_point" => price_point(job.price_tier)
                .ok_or_else(|| AuditError::Render(format!("price tier {} outside 1..=4", job.price_tier)))?,
            "cuisine" => job.cuisine.as_str(),
            "focus" => job
                .focus
                .as_deref()
                .ok_or_else(|| AuditError::Render("template uses {focus} but the job has none".into()))?,
            other => return Err(AuditError::Render(format!("unknown placeholder `{{{other}}}`"))),
        };
        out.push_str(value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
