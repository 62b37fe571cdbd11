//! Chat-completion gateway: prompt templates, a scripted mock, a remote HTTP
//! provider and an audit wrapper.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

/// Text with `{name}` placeholders. `{{` and `}}` render as literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub required_vars: BTreeSet<String>,
}

enum Piece<'a> {
    Text(&'a str),
    Var(&'a str),
}

fn is_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn pieces<'a>(name: &str, body: &'a str) -> Result<Vec<Piece<'a>>> {
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&body[start..=i]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&body[start..=i]));
                i += 2;
                start = i;
            }
            b'{' => {
                let close = body[i + 1..].find('}').map(|j| i + 1 + j).ok_or_else(|| {
                    Error::InvalidArgument(format!("template `{name}` has an unclosed brace"))
                })?;
                let var = &body[i + 1..close];
                if !is_var_name(var) {
                    return Err(Error::InvalidArgument(format!(
                        "template `{name}` has a malformed placeholder `{{{var}}}`"
                    )));
                }
                out.push(Piece::Text(&body[start..i]));
                out.push(Piece::Var(var));
                i = close + 1;
                start = i;
            }
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&body[start..]));
    Ok(out)
}

impl PromptTemplate {
    /// Template whose required variables are exactly its placeholders.
    pub fn parse(name: impl Into<String>, body: impl Into<String>) -> Result<Self> {
        let (name, body) = (name.into(), body.into());
        let required_vars = pieces(&name, &body)?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Var(v) => Some(v.to_owned()),
                Piece::Text(_) => None,
            })
            .collect();
        Ok(PromptTemplate {
            name,
            body,
            required_vars,
        })
    }

    /// Template with a declared variable set; every placeholder must be
    /// declared and every declared variable must appear.
    pub fn with_vars(name: impl Into<String>, body: impl Into<String>, vars: &[&str]) -> Result<Self> {
        let t = PromptTemplate::parse(name, body)?;
        let declared: BTreeSet<String> = vars.iter().map(|v| v.to_string()).collect();
        if let Some(p) = t.required_vars.difference(&declared).next() {
            return Err(Error::UnknownPlaceholder {
                template: t.name.clone(),
                placeholder: p.clone(),
            });
        }
        if let Some(v) = declared.difference(&t.required_vars).next() {
            return Err(Error::InvalidArgument(format!(
                "template `{}` never references `{{{v}}}`",
                t.name
            )));
        }
        Ok(t)
    }

    pub fn load(path: &Path, vars: &[&str]) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        PromptTemplate::with_vars(name, body, vars)
    }

    /// Substitutes every placeholder. Values are inserted verbatim and never
    /// rescanned.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String> {
        let mut out = String::with_capacity(self.body.len());
        for p in pieces(&self.name, &self.body)? {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Var(v) => {
                    if !self.required_vars.contains(v) {
                        return Err(Error::UnknownPlaceholder {
                            template: self.name.clone(),
                            placeholder: v.to_owned(),
                        });
                    }
                    let value = vars.get(v).ok_or_else(|| Error::MissingVar {
                        template: self.name.clone(),
                        var: v.to_owned(),
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

/// Built-in prompt bodies, overridable from files.
pub mod templates {
    pub const PROFILE: &str = include_str!("../templates/profile.txt");
    pub const EVALUATE: &str = include_str!("../templates/evaluate.txt");
    pub const GENERATE: &str = include_str!("../templates/generate.txt");
    pub const SUMMARIZE: &str = include_str!("../templates/summarize.txt");

    pub const PROFILE_VARS: &[&str] = &["statement", "tweets"];
    pub const EVALUATE_VARS: &[&str] = &["statement", "context"];
    pub const GENERATE_VARS: &[&str] = &["tweets"];
    pub const SUMMARIZE_VARS: &[&str] = &["tweets", "focus"];

    fn bundled(name: &str, body: &str, vars: &[&str]) -> super::PromptTemplate {
        super::PromptTemplate::with_vars(name, body, vars).expect("bundled template is valid")
    }

    pub fn profile() -> super::PromptTemplate {
        bundled("profile", PROFILE, PROFILE_VARS)
    }

    pub fn evaluate() -> super::PromptTemplate {
        bundled("evaluate", EVALUATE, EVALUATE_VARS)
    }

    pub fn generate() -> super::PromptTemplate {
        bundled("generate", GENERATE, GENERATE_VARS)
    }

    pub fn summarize() -> super::PromptTemplate {
        bundled("summarize", SUMMARIZE, SUMMARIZE_VARS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub model_name: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, model_name: impl Into<String>) -> Result<Self> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(Error::Empty("prompt".into()));
        }
        Ok(CompletionRequest {
            prompt,
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 1024,
            model_name: model_name.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait Gateway: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion>;
}

impl<G: Gateway + ?Sized> Gateway for Box<G> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        (**self).complete(req)
    }
}

impl<G: Gateway + ?Sized> Gateway for &G {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        (**self).complete(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub pattern: String,
    pub response: String,
}

/// Scripted provider: the first rule whose pattern matches anywhere in the
/// prompt answers it. Patterns use `(?s)` so `.` crosses newlines; `$name`
/// and `${n}` in a response expand to capture groups, `$$` is a literal `$`.
pub struct MockGateway {
    rules: Vec<(Regex, String)>,
}

impl MockGateway {
    pub fn new(rules: Vec<MockRule>) -> Result<Self> {
        let rules = rules
            .into_iter()
            .map(|r| {
                Regex::new(&format!("(?s){}", r.pattern))
                    .map(|re| (re, r.response))
                    .map_err(|e| Error::InvalidArgument(format!("bad mock pattern `{}`: {e}", r.pattern)))
            })
            .collect::<Result<_>>()?;
        Ok(MockGateway { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rules: Vec<MockRule> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        MockGateway::new(rules)
    }
}

impl Gateway for MockGateway {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        for (re, response) in &self.rules {
            if let Some(caps) = re.captures(&req.prompt) {
                let mut text = String::new();
                caps.expand(response, &mut text);
                let usage = TokenUsage {
                    prompt_tokens: text::whitespace_token_count(&req.prompt) as u64,
                    completion_tokens: text::whitespace_token_count(&text) as u64,
                };
                return Ok(Completion { text, usage });
            }
        }
        Err(Error::NoMockRule {
            prompt_hash: text::sha256_hex(req.prompt.as_bytes()),
        })
    }
}

#[cfg(feature = "remote")]
pub use remote::RemoteGateway;

#[cfg(feature = "remote")]
mod remote {
    use serde::{Deserialize, Serialize};

    use super::{Completion, CompletionRequest, Gateway, TokenUsage};
    use crate::error::{Error, Result};
    use crate::http::JsonClient;

    #[derive(Serialize)]
    struct Message<'a> {
        role: &'a str,
        content: &'a str,
    }

    #[derive(Serialize)]
    struct ChatRequest<'a> {
        model: &'a str,
        messages: [Message<'a>; 1],
        temperature: f64,
        top_p: f64,
        max_tokens: u32,
    }

    #[derive(Deserialize)]
    struct ChatResponse {
        choices: Vec<Choice>,
        #[serde(default)]
        usage: TokenUsage,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: ChoiceMessage,
    }

    #[derive(Deserialize)]
    struct ChoiceMessage {
        content: String,
    }

    /// OpenAI-style chat-completions endpoint.
    pub struct RemoteGateway {
        client: JsonClient,
    }

    impl RemoteGateway {
        pub fn new(endpoint: String, timeout_secs: u64, retries: usize, api_key: Option<String>) -> Self {
            RemoteGateway {
                client: JsonClient::new(endpoint, timeout_secs, retries, api_key),
            }
        }
    }

    impl Gateway for RemoteGateway {
        fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
            let body = ChatRequest {
                model: &req.model_name,
                messages: [Message {
                    role: "user",
                    content: &req.prompt,
                }],
                temperature: req.temperature,
                top_p: req.top_p,
                max_tokens: req.max_tokens,
            };
            let resp: ChatResponse = self.client.post(&body)?;
            let choice = resp.choices.into_iter().next().ok_or_else(|| Error::Transport {
                attempts: 1,
                message: "response has no choices".into(),
            })?;
            Ok(Completion {
                text: choice.message.content,
                usage: resp.usage,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub model: String,
    pub request_sha256: String,
    pub response_sha256: Option<String>,
    pub error: Option<String>,
    pub usage: TokenUsage,
}

/// Records a content hash of every request and response.
pub struct AuditedGateway<G> {
    inner: G,
    log: Mutex<Vec<AuditEntry>>,
}

impl<G: Gateway> AuditedGateway<G> {
    pub fn new(inner: G) -> Self {
        AuditedGateway {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Entries in a stable order (by request hash, then response hash) so that
    /// concurrent runs produce identical logs.
    pub fn entries(&self) -> Vec<AuditEntry> {
        let mut e = self.log.lock().expect("audit log poisoned").clone();
        e.sort_by(|a, b| {
            (&a.request_sha256, &a.response_sha256).cmp(&(&b.request_sha256, &b.response_sha256))
        });
        e
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("audit log poisoned").len()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in self.entries() {
            out.push_str(&serde_json::to_string(&e).expect("audit entry serializes"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl<G: Gateway> Gateway for AuditedGateway<G> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion> {
        let result = self.inner.complete(req);
        let request_sha256 = text::sha256_hex(req.prompt.as_bytes());
        let entry = match &result {
            Ok(c) => {
                log::debug!("llm call {request_sha256} ok");
                AuditEntry {
                    model: req.model_name.clone(),
                    request_sha256,
                    response_sha256: Some(text::sha256_hex(c.text.as_bytes())),
                    error: None,
                    usage: c.usage,
                }
            }
            Err(e) => {
                log::warn!("llm call {request_sha256} failed: {e}");
                AuditEntry {
                    model: req.model_name.clone(),
                    request_sha256,
                    response_sha256: None,
                    error: Some(e.to_string()),
                    usage: TokenUsage::default(),
                }
            }
        };
        self.log.lock().expect("audit log poisoned").push(entry);
        result
    }
}

/// Runs `f` over `items` with at most `max_in_flight` concurrent calls,
/// returning results in input order.
pub fn map_bounded<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    use rayon::prelude::*;
    let threads = max_in_flight.max(1);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub provider: ProviderKind,
    pub model: String,
    pub endpoint: Option<String>,
    pub rule_file: Option<PathBuf>,
    /// Environment variable holding the bearer token for the remote provider.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub retries: usize,
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            provider: ProviderKind::Mock,
            model: "mock".into(),
            endpoint: None,
            rule_file: None,
            api_key_env: None,
            timeout_secs: 120,
            retries: 3,
            max_in_flight: 4,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<()> {
        match self.provider {
            ProviderKind::Mock if self.rule_file.is_none() => Err(Error::InvalidArgument(
                "mock provider needs a rule_file".into(),
            )),
            ProviderKind::Remote if self.endpoint.is_none() => Err(Error::InvalidArgument(
                "remote provider needs an endpoint".into(),
            )),
            _ if self.max_in_flight == 0 => {
                Err(Error::InvalidArgument("max_in_flight must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Builds the provider; relative rule paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Box<dyn Gateway>> {
        self.validate()?;
        match self.provider {
            ProviderKind::Mock => {
                let path = base.join(self.rule_file.as_ref().expect("validated"));
                Ok(Box::new(MockGateway::load(&path)?))
            }
            #[cfg(feature = "remote")]
            ProviderKind::Remote => {
                let key = self.api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
                Ok(Box::new(RemoteGateway::new(
                    self.endpoint.clone().expect("validated"),
                    self.timeout_secs,
                    self.retries,
                    key,
                )))
            }
            #[cfg(not(feature = "remote"))]
            ProviderKind::Remote => Err(Error::InvalidArgument(
                "built without the `remote` feature".into(),
            )),
        }
    }
}
