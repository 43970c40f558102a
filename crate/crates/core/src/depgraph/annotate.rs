use std::fmt;
use std::io::Write;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Provenance;
use crate::{Error, FeatureTable, PreferenceMatrix, Result};

/// How dependency weights are obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AnnotatorSpec {
    /// `clip(p_mn / p_ij, 0, 1)` from the ground-truth matrix.
    Oracle,
    Constant(f64),
    /// Oracle weight plus Gaussian noise with this standard deviation.
    Noisy(f64),
    /// HTTP endpoint receiving the rendered prompt as a POST body.
    ExternalHttp(String),
    /// Shell-free command line receiving the prompt on stdin.
    ExternalCommand(Vec<String>),
    /// No automatic weights; a person supplies them.
    Manual,
}

impl AnnotatorSpec {
    pub fn needs_oracle(&self) -> bool {
        matches!(self, AnnotatorSpec::Oracle | AnnotatorSpec::Noisy(_))
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            AnnotatorSpec::Oracle => Provenance::Oracle,
            AnnotatorSpec::Constant(_) => Provenance::Constant,
            AnnotatorSpec::Noisy(_) => Provenance::Noisy,
            AnnotatorSpec::ExternalHttp(_) | AnnotatorSpec::ExternalCommand(_) => Provenance::External,
            AnnotatorSpec::Manual => Provenance::Manual,
        }
    }
}

impl fmt::Display for AnnotatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnnotatorSpec::Oracle => f.write_str("oracle"),
            AnnotatorSpec::Constant(c) => write!(f, "constant:{c}"),
            AnnotatorSpec::Noisy(s) => write!(f, "noisy:{s}"),
            AnnotatorSpec::ExternalHttp(url) => write!(f, "external:{url}"),
            AnnotatorSpec::ExternalCommand(argv) => write!(f, "external:cmd:{}", argv.join(" ")),
            AnnotatorSpec::Manual => f.write_str("manual"),
        }
    }
}

impl FromStr for AnnotatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let number = |v: &str, what: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::invalid(format!("{what} needs a number, got {v:?}")))
        };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let spec = match (kind, arg) {
            ("oracle", None) => AnnotatorSpec::Oracle,
            ("manual", None) => AnnotatorSpec::Manual,
            ("constant", Some(v)) => {
                let c = number(v, "constant")?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::invalid(format!("constant weight {c} outside [0, 1]")));
                }
                AnnotatorSpec::Constant(c)
            }
            ("noisy", Some(v)) => {
                let sd = number(v, "noisy")?;
                if !(sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::invalid(format!("noise level {sd} must be non-negative")));
                }
                AnnotatorSpec::Noisy(sd)
            }
            ("external", Some(rest)) => match rest.strip_prefix("cmd:") {
                Some(cmd) => {
                    let argv: Vec<String> = cmd.split_whitespace().map(str::to_owned).collect();
                    if argv.is_empty() {
                        return Err(Error::invalid("external:cmd: needs a command"));
                    }
                    AnnotatorSpec::ExternalCommand(argv)
                }
                None if rest.starts_with("http://") || rest.starts_with("https://") => {
                    AnnotatorSpec::ExternalHttp(rest.to_owned())
                }
                None => return Err(Error::invalid(format!("external annotator needs a URL, got {rest:?}"))),
            },
            _ => return Err(Error::invalid(format!("unknown annotator {s:?}"))),
        };
        Ok(spec)
    }
}

impl TryFrom<String> for AnnotatorSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AnnotatorSpec> for String {
    fn from(spec: AnnotatorSpec) -> Self {
        spec.to_string()
    }
}

/// What an annotator may look at.
#[derive(Clone, Copy, Debug, Default)]
pub struct AnnotationContext<'a> {
    pub labels: Option<&'a [String]>,
    pub features: Option<&'a FeatureTable>,
    pub oracle: Option<&'a PreferenceMatrix>,
}

/// A process that turns a rendered prompt into a reply.
pub trait ExternalAnnotator: Send + Sync + fmt::Debug {
    fn complete(&self, prompt: &str) -> Result<String>;
}

#[derive(Clone, Debug)]
pub struct CommandAnnotator {
    argv: Vec<String>,
}

impl CommandAnnotator {
    pub fn new(argv: Vec<String>) -> Result<Self> {
        if argv.is_empty() {
            return Err(Error::invalid("annotator command is empty"));
        }
        Ok(Self { argv })
    }
}

impl ExternalAnnotator for CommandAnnotator {
    fn complete(&self, prompt: &str) -> Result<String> {
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Annotation(format!("cannot start {}: {e}", self.argv[0])))?;
        if let Some(mut stdin) = child.stdin.take() {
            // A child that exits without reading is judged by its reply alone.
            let _ = stdin.write_all(prompt.as_bytes());
        }
        let out = child
            .wait_with_output()
            .map_err(|e| Error::Annotation(format!("annotator command failed: {e}")))?;
        if !out.status.success() {
            return Err(Error::Annotation(format!("annotator exited with {}", out.status)));
        }
        String::from_utf8(out.stdout).map_err(|_| Error::Annotation("reply is not UTF-8".into()))
    }
}

#[derive(Clone, Debug)]
pub struct HttpAnnotator {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpAnnotator {
    pub fn new(url: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Annotation(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { url: url.into(), client })
    }
}

impl ExternalAnnotator for HttpAnnotator {
    fn complete(&self, prompt: &str) -> Result<String> {
        let resp = self
            .client
            .post(&self.url)
            .header("content-type", "text/plain; charset=utf-8")
            .body(prompt.to_owned())
            .send()
            .map_err(|e| Error::Annotation(format!("POST {} failed: {e}", self.url)))?;
        if !resp.status().is_success() {
            return Err(Error::Annotation(format!("POST {} returned {}", self.url, resp.status())));
        }
        resp.text().map_err(|e| Error::Annotation(format!("unreadable reply: {e}")))
    }
}

/// Reads the weight from a reply whose last non-empty line is
/// `Numeric score: <x>` with `x` in `[0, 1]`.
pub fn parse_score_reply(reply: &str) -> Result<f64> {
    let last = reply
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty())
        .ok_or_else(|| Error::Annotation("empty reply".into()))?;
    let value = last
        .strip_prefix("Numeric score:")
        .ok_or_else(|| Error::Annotation(format!("last line {last:?} carries no numeric score")))?
        .trim();
    let w: f64 = value
        .parse()
        .map_err(|_| Error::Annotation(format!("score {value:?} is not a number")))?;
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Annotation(format!("score {w} outside [0, 1]")));
    }
    Ok(w)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptItem {
    pub label: String,
    pub description: String,
}

fn prompt_item(ctx: &AnnotationContext<'_>, i: usize) -> PromptItem {
    let label = ctx
        .labels
        .and_then(|l| l.get(i).cloned())
        .unwrap_or_else(|| format!("candidate {}", i + 1));
    let description = ctx
        .features
        .filter(|f| i < f.len())
        .map(|f| f.describe(i))
        .unwrap_or_default();
    PromptItem { label, description }
}

/// Prompt asking how strongly the queried outcome `i` over `j` carries over
/// to the related pair `m` over `n`.
pub fn render_prompt(
    ctx: &AnnotationContext<'_>,
    target: (usize, usize),
    source: (usize, usize),
) -> String {
    let items = [target.0, target.1, source.0, source.1].map(|x| prompt_item(ctx, x));
    let mut out = String::from(
        "You will see four items, each with a short description.\n\n",
    );
    for (tag, item) in ["A", "B", "C", "D"].iter().zip(&items) {
        out.push_str(&format!("Item {tag}: {}", item.label));
        if !item.description.is_empty() {
            out.push_str(&format!(" ({})", item.description));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "\nSuppose a user prefers {} (Item A) over {} (Item B).\n\
         Rate from 0 to 1 how strongly this tells us that the same user prefers \
         {} (Item C) over {} (Item D), where 0 means no relation and 1 means the \
         two comparisons are equivalent.\n\
         End your reply with a single line of the form\n\
         Numeric score: <number between 0 and 1>\n",
        items[0].label, items[1].label, items[2].label, items[3].label
    ));
    out
}

/// Produces dependency weights for candidate related pairs.
#[derive(Clone, Debug)]
pub struct Annotator {
    spec: AnnotatorSpec,
    rng: ChaCha8Rng,
    external: Option<Arc<dyn ExternalAnnotator>>,
}

impl Annotator {
    pub fn new(spec: AnnotatorSpec, seed: u64) -> Result<Self> {
        let external: Option<Arc<dyn ExternalAnnotator>> = match &spec {
            AnnotatorSpec::ExternalHttp(url) => Some(Arc::new(HttpAnnotator::new(url.clone())?)),
            AnnotatorSpec::ExternalCommand(argv) => Some(Arc::new(CommandAnnotator::new(argv.clone())?)),
            _ => None,
        };
        Ok(Self { spec, rng: ChaCha8Rng::seed_from_u64(seed), external })
    }

    /// An external annotator backed by any implementation.
    pub fn with_external(backend: Arc<dyn ExternalAnnotator>, seed: u64) -> Self {
        Self {
            spec: AnnotatorSpec::ExternalCommand(vec!["<custom>".into()]),
            rng: ChaCha8Rng::seed_from_u64(seed),
            external: Some(backend),
        }
    }

    pub fn spec(&self) -> &AnnotatorSpec {
        &self.spec
    }

    pub fn provenance(&self) -> Provenance {
        self.spec.provenance()
    }

    /// Weight of source `(m, n)` as evidence for target `(i, j)`, or `None`
    /// for the manual annotator, which never answers on its own.
    pub fn annotate(
        &mut self,
        target: (usize, usize),
        source: (usize, usize),
        ctx: &AnnotationContext<'_>,
    ) -> Result<Option<f64>> {
        let w = match &self.spec {
            AnnotatorSpec::Manual => return Ok(None),
            AnnotatorSpec::Constant(c) => *c,
            AnnotatorSpec::Oracle => oracle_weight(ctx, target, source)?,
            AnnotatorSpec::Noisy(sd) => {
                let base = oracle_weight(ctx, target, source)?;
                let noise = Normal::new(0.0, *sd)
                    .map_err(|e| Error::Annotation(e.to_string()))?
                    .sample(&mut self.rng);
                (base + noise).clamp(0.0, 1.0)
            }
            AnnotatorSpec::ExternalHttp(_) | AnnotatorSpec::ExternalCommand(_) => {
                let backend = self.external.as_ref().expect("external spec has a backend");
                parse_score_reply(&backend.complete(&render_prompt(ctx, target, source))?)?
            }
        };
        Ok(Some(w))
    }
}

fn oracle_weight(
    ctx: &AnnotationContext<'_>,
    (i, j): (usize, usize),
    (m, n): (usize, usize),
) -> Result<f64> {
    let p = ctx
        .oracle
        .ok_or_else(|| Error::Annotation("oracle weights need a ground-truth matrix".into()))?;
    let pij = p.get(i, j);
    if pij <= 0.0 {
        return Ok(0.0);
    }
    Ok((p.get(m, n) / pij).clamp(0.0, 1.0))
}
