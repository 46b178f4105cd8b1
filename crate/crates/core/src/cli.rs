// SPDX-License-Identifier: Apache-2.0

//! The `agentfacts` command.
//!
//! Exit codes: 0 success, 1 validation, verification or trust failure,
//! 2 usage error (bad arguments, unreadable input files, missing
//! passphrase). With `--format machine` every invocation prints exactly one
//! JSON object on standard output:
//! `{"command": ..., "exit_code": ..., "result": ...}` on success and
//! `{"command": ..., "exit_code": ..., "error": ..., "message": ...}` on
//! failure. A command that ran but reached a negative verdict (exit 1)
//! carries both its `result` and `error`/`message`. Diagnostics always go
//! to standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::canon::{self, canonicalize, canonicalize_serialize, normalize_scope};
use crate::keystore::{passphrase_from_env, Keystore};
use crate::lifecycle::{self, StalenessPolicy};
use crate::model::{self, parse_document, AgentFactsDoc, Audience, RoleOverlay, Severity};
use crate::permissions::{self, AccessContext, Action, GrantRequest, PermissionState};
use crate::registry::client::{HttpTransport, RegistryClient};
use crate::registry::server::{self, AppState};
use crate::registry::{PublishRequest, RegistryStore};
use crate::scenario::{run_employee_agent_demo, DemoOptions};
use crate::signing::{
    self, generate_authority, AuthorityRegistry, PrivateKeyHandle, RevocationEntry,
    RevocationTarget, SigStatus, SignatureBlock,
};
use crate::trust::{self, Overall, SectionStatus, TrustPolicy, TrustVerdict};
use crate::units::Timestamp;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Human,
    Machine,
}

/// Paths and output mode shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct CliConfig {
    /// Passphrase-protected private keys (passphrase from AGENTFACTS_KEYSTORE_PASS).
    #[arg(long, global = true, default_value = "agentfacts.keystore.json")]
    pub keystore: PathBuf,
    /// Known verification authorities, a JSON object keyed by authority id.
    #[arg(long, global = true, default_value = "authorities.json")]
    pub authorities: PathBuf,
    /// Trust policy used when a command takes `--policy` and none is given.
    #[arg(long, global = true)]
    pub default_policy: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Human)]
    pub format: OutputFormat,
}

#[derive(Parser, Debug)]
#[command(
    name = "agentfacts",
    version,
    about = "Verified agent metadata tooling"
)]
struct Cli {
    #[command(flatten)]
    config: CliConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a document's structure.
    Validate { doc: PathBuf },
    /// Project a document for one audience.
    View {
        doc: PathBuf,
        #[arg(long, value_parser = parse_audience)]
        audience: Audience,
    },
    /// Print canonical bytes and digest of a document or a section payload.
    Canon {
        file: PathBuf,
        /// Comma-separated sections; prints the signed payload for them.
        #[arg(long, value_delimiter = ',')]
        sections: Vec<String>,
        /// Treat the file as arbitrary JSON rather than a document.
        #[arg(long)]
        any: bool,
    },
    /// Create an authority key pair in the keystore.
    Keygen {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "ed25519")]
        algorithm: String,
        #[arg(long = "domain")]
        domains: Vec<String>,
    },
    /// Sign sections of a document and attach the signature.
    Sign {
        doc: PathBuf,
        /// Authority id of the signing key.
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sections: Vec<String>,
        #[arg(long)]
        confidence: f64,
        #[arg(long)]
        at: Option<Timestamp>,
        /// Write the signed document here instead of in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the signatures carried by a document.
    VerifySig {
        doc: PathBuf,
        #[arg(long)]
        index: Option<usize>,
        #[arg(long)]
        revocations: Option<PathBuf>,
        #[arg(long)]
        at: Option<Timestamp>,
    },
    /// Issue a self-revocation for a signature or an authority.
    Revoke {
        #[arg(long)]
        key: String,
        /// Document holding the signature to revoke.
        #[arg(long, requires = "index", conflicts_with = "authority")]
        doc: Option<PathBuf>,
        #[arg(long)]
        index: Option<usize>,
        /// Revoke the key's own authority instead of one signature.
        #[arg(long)]
        authority: bool,
        #[arg(long)]
        reason: String,
        #[arg(long)]
        at: Option<Timestamp>,
        /// Revocation list to append to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trust policy against a document.
    TrustEval(TrustArgs),
    /// Validate a document and evaluate a trust policy.
    Verify {
        #[arg(long)]
        doc: PathBuf,
        #[command(flatten)]
        trust: TrustOpts,
    },
    /// Per-section freshness.
    Freshness {
        doc: PathBuf,
        /// Staleness policy file.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        at: Option<Timestamp>,
    },
    /// Layer a role overlay onto a document.
    Overlay {
        doc: PathBuf,
        #[arg(long)]
        overlay: PathBuf,
        #[arg(long)]
        at: Option<Timestamp>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hash-linked version chains.
    #[command(subcommand)]
    Chain(ChainCommand),
    /// Grants, checks and the audit trail.
    #[command(subcommand)]
    Perms(PermsCommand),
    /// Registry node and client.
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Scripted walk-throughs.
    #[command(subcommand)]
    Demo(DemoCommand),
}

#[derive(Args, Debug)]
struct TrustArgs {
    doc: PathBuf,
    #[command(flatten)]
    trust: TrustOpts,
}

#[derive(Args, Debug)]
struct TrustOpts {
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    revocations: Option<PathBuf>,
    #[arg(long)]
    at: Option<Timestamp>,
}

#[derive(Subcommand, Debug)]
enum ChainCommand {
    /// Append a revision to a chain directory (the first becomes revision 0).
    Append {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        doc: PathBuf,
        /// Provider authority id signing the link.
        #[arg(long)]
        key: Option<String>,
    },
    /// Verify a chain directory.
    Verify {
        #[arg(long)]
        dir: PathBuf,
        /// Provider authority id; defaults to the first link's provider.
        #[arg(long)]
        provider: Option<String>,
    },
}

#[derive(Args, Debug)]
struct PermsDoc {
    /// Document whose permission state is read and updated in place.
    #[arg(long)]
    doc: PathBuf,
    #[arg(long)]
    at: Option<Timestamp>,
}

#[derive(Subcommand, Debug)]
enum PermsCommand {
    Grant {
        #[command(flatten)]
        target: PermsDoc,
        #[arg(long, conflicts_with = "pending")]
        request: Option<PathBuf>,
        /// Index of a pending request added by a role overlay.
        #[arg(long)]
        pending: Option<usize>,
        #[arg(long)]
        actor: String,
    },
    Check {
        #[command(flatten)]
        target: PermsDoc,
        #[arg(long, value_parser = parse_action)]
        action: Action,
        #[arg(long)]
        resource: String,
        /// Caller's timezone (IANA name), for the reported local hour.
        #[arg(long, default_value = "UTC")]
        timezone: String,
        #[arg(long)]
        jurisdiction: Option<String>,
        #[arg(long)]
        reviewer: bool,
    },
    Escalate {
        #[command(flatten)]
        target: PermsDoc,
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        approver: String,
    },
    Revoke {
        #[command(flatten)]
        target: PermsDoc,
        #[arg(long)]
        grant: u64,
        #[arg(long)]
        actor: String,
        #[arg(long, default_value = "")]
        reason: String,
    },
    Revert {
        #[command(flatten)]
        target: PermsDoc,
    },
    /// Revert expired grants and apply due escalations from a schedule file.
    Schedule {
        #[command(flatten)]
        target: PermsDoc,
        /// JSON array of {id, due_at, approver, request}.
        #[arg(long)]
        schedule: PathBuf,
    },
    AuditVerify {
        #[arg(long)]
        doc: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum RegistryCommand {
    /// Serve a store directory over HTTP.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Freeze the server clock.
        #[arg(long)]
        at: Option<Timestamp>,
    },
    Publish {
        #[arg(long)]
        url: String,
        #[arg(long)]
        doc: PathBuf,
        /// JSON array of detached signature blocks.
        #[arg(long)]
        signatures: Option<PathBuf>,
        /// Version link joining the registry's head to this revision.
        #[arg(long)]
        link: Option<PathBuf>,
    },
    Fetch {
        #[arg(long)]
        url: String,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        at: Option<Timestamp>,
        /// Save the fetched revision (signatures folded in).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Subscribe {
        #[arg(long)]
        url: String,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        webhook: String,
    },
    /// Attempt every pending webhook notification once.
    Deliver {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 10)]
        timeout_secs: u64,
    },
}

#[derive(Subcommand, Debug)]
enum DemoCommand {
    /// Onboard a financial reporting agent and walk its permission lifecycle.
    EmployeeAgent {
        #[arg(long)]
        tamper_compliance: bool,
        #[arg(long)]
        frozen_clock: bool,
    },
}

fn parse_audience(s: &str) -> Result<Audience, String> {
    s.parse()
}

fn parse_action(s: &str) -> Result<Action, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure { kind: &'static str, message: String },
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure { .. } => 1,
        }
    }

    fn fail(kind: &'static str, message: impl Into<String>) -> Self {
        CliError::Failure {
            kind,
            message: message.into(),
        }
    }
}

/// A command's result: machine payload, human rendering, exit code and
/// any diagnostics for standard error.
struct Outcome {
    code: i32,
    result: Value,
    human: String,
    diagnostics: Vec<String>,
}

impl Outcome {
    fn ok<T: Serialize>(result: &T, human: impl Into<String>) -> Self {
        Outcome {
            code: 0,
            result: serde_json::to_value(result).expect("results serialize"),
            human: human.into(),
            diagnostics: Vec::new(),
        }
    }

    fn failing(mut self, failed: bool, diagnostic: impl Into<String>) -> Self {
        if failed {
            self.code = 1;
            self.diagnostics.push(diagnostic.into());
        }
        self
    }
}

type CmdResult = Result<Outcome, CliError>;

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Validate { .. } => "validate",
        Command::View { .. } => "view",
        Command::Canon { .. } => "canon",
        Command::Keygen { .. } => "keygen",
        Command::Sign { .. } => "sign",
        Command::VerifySig { .. } => "verify-sig",
        Command::Revoke { .. } => "revoke",
        Command::TrustEval(_) => "trust-eval",
        Command::Verify { .. } => "verify",
        Command::Freshness { .. } => "freshness",
        Command::Overlay { .. } => "overlay",
        Command::Chain(ChainCommand::Append { .. }) => "chain append",
        Command::Chain(ChainCommand::Verify { .. }) => "chain verify",
        Command::Perms(p) => match p {
            PermsCommand::Grant { .. } => "perms grant",
            PermsCommand::Check { .. } => "perms check",
            PermsCommand::Escalate { .. } => "perms escalate",
            PermsCommand::Revoke { .. } => "perms revoke",
            PermsCommand::Revert { .. } => "perms revert",
            PermsCommand::Schedule { .. } => "perms schedule",
            PermsCommand::AuditVerify { .. } => "perms audit-verify",
        },
        Command::Registry(r) => match r {
            RegistryCommand::Serve { .. } => "registry serve",
            RegistryCommand::Publish { .. } => "registry publish",
            RegistryCommand::Fetch { .. } => "registry fetch",
            RegistryCommand::Subscribe { .. } => "registry subscribe",
            RegistryCommand::Deliver { .. } => "registry deliver",
        },
        Command::Demo(DemoCommand::EmployeeAgent { .. }) => "demo employee-agent",
    }
}

/// Runs the command line and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let machine = args
        .windows(2)
        .any(|w| w[0] == "--format" && w[1] == "machine")
        || args.iter().any(|a| a == "--format=machine");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{e}");
            if machine {
                let body = json!({"command": null, "exit_code": 2, "error": "usage", "message": e.kind().to_string()});
                let _ = writeln!(out, "{body}");
            }
            return 2;
        }
    };
    let name = command_name(&cli.command);
    let format = cli.config.format;
    match dispatch(cli.command, &cli.config, err) {
        Ok(outcome) => {
            for d in &outcome.diagnostics {
                let _ = writeln!(err, "{d}");
            }
            match format {
                OutputFormat::Machine => {
                    let mut body = json!({"command": name, "exit_code": outcome.code, "result": outcome.result});
                    if outcome.code != 0 {
                        body["error"] = json!("failed");
                        body["message"] = json!(outcome.diagnostics.join("; "));
                    }
                    let _ = writeln!(out, "{body}");
                }
                OutputFormat::Human => {
                    let _ = write!(out, "{}", outcome.human);
                    if !outcome.human.is_empty() && !outcome.human.ends_with('\n') {
                        let _ = writeln!(out);
                    }
                }
            }
            outcome.code
        }
        Err(e) => {
            let (kind, message) = match &e {
                CliError::Usage(m) => ("usage", m.clone()),
                CliError::Failure { kind, message } => (*kind, message.clone()),
            };
            let _ = writeln!(err, "agentfacts {name}: {message}");
            if format == OutputFormat::Machine {
                let body = json!({"command": name, "exit_code": e.code(), "error": kind, "message": message});
                let _ = writeln!(out, "{body}");
            }
            e.code()
        }
    }
}

// Input helpers.

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::fail(
            "parse",
            format!("{} is not a valid {what}: {e}", path.display()),
        )
    })
}

fn read_doc(path: &Path) -> Result<AgentFactsDoc, CliError> {
    let text = read_text(path)?;
    parse_document(&text).map_err(|e| CliError::fail("parse", format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_doc(path: &Path, doc: &AgentFactsDoc) -> Result<(), CliError> {
    write_file(path, &(doc.to_json_pretty() + "\n"))
}

fn load_authorities(config: &CliConfig) -> Result<AuthorityRegistry, CliError> {
    if !config.authorities.exists() {
        return Ok(AuthorityRegistry::new());
    }
    read_json(&config.authorities, "authority registry")
}

fn load_revocations(path: Option<&Path>) -> Result<Vec<RevocationEntry>, CliError> {
    match path {
        Some(p) if p.exists() => read_json(p, "revocation list"),
        Some(p) => Err(CliError::Usage(format!(
            "cannot read {}: no such file",
            p.display()
        ))),
        None => Ok(Vec::new()),
    }
}

fn load_policy(path: Option<&Path>, config: &CliConfig) -> Result<TrustPolicy, CliError> {
    let path = path.or(config.default_policy.as_deref()).ok_or_else(|| {
        CliError::Usage("a trust policy is required (--policy or --default-policy)".into())
    })?;
    read_json(path, "trust policy")
}

fn load_key(config: &CliConfig, authority_id: &str) -> Result<PrivateKeyHandle, CliError> {
    let pass = passphrase_from_env().map_err(|e| CliError::Usage(e.to_string()))?;
    let ks = Keystore::load(&config.keystore, &pass).map_err(|e| CliError::Usage(e.to_string()))?;
    ks.key(authority_id)
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn now_or(at: Option<Timestamp>) -> Timestamp {
    at.unwrap_or_else(Timestamp::now)
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("values serialize") + "\n"
}

fn dispatch(cmd: Command, config: &CliConfig, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Validate { doc } => cmd_validate(&doc),
        Command::View { doc, audience } => {
            let d = read_doc(&doc)?;
            let view = model::select_view(&d, audience);
            Ok(Outcome::ok(&view, to_pretty(&view)))
        }
        Command::Canon {
            file,
            sections,
            any,
        } => cmd_canon(&file, &sections, any),
        Command::Keygen {
            name,
            algorithm,
            domains,
        } => cmd_keygen(config, &name, &algorithm, domains),
        Command::Sign {
            doc,
            key,
            sections,
            confidence,
            at,
            out,
        } => cmd_sign(
            config,
            &doc,
            &key,
            &sections,
            confidence,
            now_or(at),
            out.as_deref(),
        ),
        Command::VerifySig {
            doc,
            index,
            revocations,
            at,
        } => cmd_verify_sig(config, &doc, index, revocations.as_deref(), now_or(at)),
        Command::Revoke {
            key,
            doc,
            index,
            authority,
            reason,
            at,
            out,
        } => cmd_revoke(
            config,
            &key,
            doc.as_deref(),
            index,
            authority,
            &reason,
            now_or(at),
            out.as_deref(),
        ),
        Command::TrustEval(args) => cmd_trust(config, &args.doc, &args.trust, false),
        Command::Verify { doc, trust } => cmd_trust(config, &doc, &trust, true),
        Command::Freshness { doc, policy, at } => {
            cmd_freshness(&doc, policy.as_deref(), now_or(at))
        }
        Command::Overlay {
            doc,
            overlay,
            at,
            out,
        } => {
            let base = read_doc(&doc)?;
            let text = read_text(&overlay)?;
            let overlay =
                RoleOverlay::parse(&text).map_err(|e| CliError::fail("overlay", e.to_string()))?;
            let next = model::apply_overlay(&base, &overlay, now_or(at))
                .map_err(|e| CliError::fail("overlay", e.to_string()))?;
            write_doc(out.as_deref().unwrap_or(&doc), &next)?;
            Ok(Outcome::ok(
                &json!({"version_seq": next.identity.version_seq, "namespace": overlay.namespace()}),
                format!(
                    "applied overlay from {} as revision {}\n",
                    overlay.assigning_org, next.identity.version_seq
                ),
            ))
        }
        Command::Chain(c) => cmd_chain(config, c),
        Command::Perms(p) => cmd_perms(p),
        Command::Registry(r) => cmd_registry(config, r, err),
        Command::Demo(DemoCommand::EmployeeAgent {
            tamper_compliance,
            frozen_clock,
        }) => {
            let t = run_employee_agent_demo(DemoOptions {
                tamper_compliance,
                frozen_clock,
            });
            let failed = t.failed_stage.clone();
            Ok(Outcome::ok(&t, t.render()).failing(
                failed.is_some(),
                format!("demo failed at stage {}", failed.unwrap_or_default()),
            ))
        }
    }
}

fn cmd_validate(path: &Path) -> CmdResult {
    let doc = read_doc(path)?;
    let report = model::validate_document(&doc);
    let mut human = String::new();
    for f in &report.findings {
        let sev = match f.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        let _ = writeln!(human, "{sev} {}: {}", f.path, f.message);
    }
    let errors = report.error_count();
    let _ = writeln!(
        human,
        "{}: {} error(s), {} warning(s)",
        path.display(),
        errors,
        report.findings.len() - errors
    );
    Ok(Outcome::ok(&report, human).failing(errors > 0, format!("{errors} validation error(s)")))
}

fn cmd_canon(path: &Path, sections: &[String], any: bool) -> CmdResult {
    let bytes = if any {
        let value: Value = read_json(path, "JSON value")?;
        canonicalize(&value)
    } else {
        let doc = read_doc(path)?;
        if sections.is_empty() {
            canonicalize_serialize(&doc)
        } else {
            normalize_scope(sections).and_then(|scope| canon::section_payload(&doc, &scope))
        }
    }
    .map_err(|e| CliError::fail("canon", e.to_string()))?;
    let d = canon::digest(&bytes);
    Ok(Outcome::ok(
        &json!({"canonical": bytes.as_str(), "digest": d}),
        format!("{}\n{d}\n", bytes.as_str()),
    ))
}

fn cmd_keygen(config: &CliConfig, name: &str, algorithm: &str, domains: Vec<String>) -> CmdResult {
    let pass = passphrase_from_env().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut ks =
        Keystore::load(&config.keystore, &pass).map_err(|e| CliError::Usage(e.to_string()))?;
    let (key, record) =
        generate_authority(algorithm, name, domains).map_err(|e| CliError::Usage(e.to_string()))?;
    ks.insert(&key);
    ks.save(&config.keystore, &pass)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut registry = load_authorities(config)?;
    registry.insert(record.authority_id.clone(), record.clone());
    write_file(&config.authorities, &to_pretty(&registry))?;
    Ok(Outcome::ok(
        &record,
        format!(
            "created {} ({}) for {name}\n",
            record.authority_id,
            record.algorithm.id()
        ),
    ))
}

fn cmd_sign(
    config: &CliConfig,
    path: &Path,
    key_id: &str,
    sections: &[String],
    confidence: f64,
    at: Timestamp,
    out: Option<&Path>,
) -> CmdResult {
    let mut doc = read_doc(path)?;
    let scope = normalize_scope(sections).map_err(|e| CliError::Usage(e.to_string()))?;
    let key = load_key(config, key_id)?;
    let listed = &mut doc
        .verification
        .get_or_insert_with(Default::default)
        .verification_authorities;
    if !listed.iter().any(|a| a == key.authority_id()) {
        listed.push(key.authority_id().to_string());
    }
    let block =
        signing::sign_sections(&key, &doc, &scope, confidence, at).map_err(|e| match e {
            signing::SigningError::InvalidConfidence(_) => CliError::Usage(e.to_string()),
            other => CliError::fail("sign", other.to_string()),
        })?;
    doc.attach_signature(block.clone());
    write_doc(out.unwrap_or(path), &doc)?;
    let names: Vec<&str> = block.scope.iter().map(|s| s.as_str()).collect();
    Ok(Outcome::ok(
        &block,
        format!(
            "signed [{}] as {} at {}\n",
            names.join(", "),
            block.authority_id,
            block.signed_at
        ),
    ))
}

fn cmd_verify_sig(
    config: &CliConfig,
    path: &Path,
    index: Option<usize>,
    revocations: Option<&Path>,
    at: Timestamp,
) -> CmdResult {
    let doc = read_doc(path)?;
    let authorities = load_authorities(config)?;
    let revocations = load_revocations(revocations)?;
    let sigs = doc.signatures();
    let indices: Vec<usize> = match index {
        Some(i) if i < sigs.len() => vec![i],
        Some(i) => {
            return Err(CliError::Usage(format!(
                "no signature at index {i} ({} present)",
                sigs.len()
            )))
        }
        None => (0..sigs.len()).collect(),
    };
    let mut rows = Vec::new();
    let mut human = String::new();
    for i in indices {
        let status = signing::verify_signature(&doc, &sigs[i], &authorities, &revocations, at);
        let _ = writeln!(human, "#{i} {} {status}", sigs[i].authority_id);
        rows.push(json!({"index": i, "authority_id": sigs[i].authority_id, "status": status}));
    }
    if rows.is_empty() {
        human.push_str("no signatures\n");
    }
    let bad = rows
        .iter()
        .filter(|r| r["status"] != json!(SigStatus::Valid))
        .count();
    Ok(
        Outcome::ok(&json!({"signatures": rows, "evaluated_at": at}), human)
            .failing(bad > 0, format!("{bad} signature(s) not valid")),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_revoke(
    config: &CliConfig,
    key_id: &str,
    doc: Option<&Path>,
    index: Option<usize>,
    authority: bool,
    reason: &str,
    at: Timestamp,
    out: Option<&Path>,
) -> CmdResult {
    let key = load_key(config, key_id)?;
    let entry = match (doc, index, authority) {
        (Some(path), Some(i), false) => {
            let d = read_doc(path)?;
            let sig = d
                .signatures()
                .get(i)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("no signature at index {i}")))?;
            signing::revoke(&key, RevocationTarget::Signature(&sig), reason, at)
        }
        (None, None, true) => {
            signing::revoke(&key, RevocationTarget::Authority(key_id), reason, at)
        }
        _ => {
            return Err(CliError::Usage(
                "give either --doc with --index, or --authority".into(),
            ))
        }
    }
    .map_err(|e| CliError::fail("revoke", e.to_string()))?;
    if let Some(out) = out {
        let mut list: Vec<RevocationEntry> = if out.exists() {
            read_json(out, "revocation list")?
        } else {
            Vec::new()
        };
        list.push(entry.clone());
        write_file(out, &to_pretty(&list))?;
    }
    Ok(Outcome::ok(
        &entry,
        format!("revoked {} ({})\n", entry.target_ref, entry.reason),
    ))
}

fn verdict_diagnostics(v: &TrustVerdict) -> Vec<String> {
    v.per_section
        .iter()
        .filter(|(_, s)| s.status != SectionStatus::Trusted)
        .map(|(name, s)| {
            let status = serde_json::to_value(s.status).unwrap_or_default();
            format!(
                "{name}: {} ({} of {} signatures, score {} < {} required)",
                status.as_str().unwrap_or_default(),
                s.qualifying_signatures.len(),
                s.required_signatures,
                s.score,
                trust::fmt_ppm(s.required_confidence)
            )
        })
        .collect()
}

fn cmd_trust(config: &CliConfig, path: &Path, opts: &TrustOpts, validate_first: bool) -> CmdResult {
    let doc = read_doc(path)?;
    let policy = load_policy(opts.policy.as_deref(), config)?;
    let authorities = load_authorities(config)?;
    let revocations = load_revocations(opts.revocations.as_deref())?;
    let at = now_or(opts.at);
    let report = model::validate_document(&doc);
    if validate_first && report.has_errors() {
        return Err(CliError::fail(
            "validation",
            format!(
                "{} validation error(s); run validate for details",
                report.error_count()
            ),
        ));
    }
    let verdict = trust::evaluate_trust(&doc, &policy, &authorities, &revocations, at)
        .map_err(|e| CliError::Usage(format!("policy: {e}")))?;
    let explanation = trust::explain_verdict(&verdict);
    let mut outcome = Outcome::ok(
        &json!({"verdict": verdict, "explanation": explanation.lines}),
        explanation.to_string(),
    );
    if verdict.overall != Overall::Trusted {
        outcome.code = 1;
        outcome
            .diagnostics
            .push(format!("overall: {}", verdict.overall));
        outcome.diagnostics.extend(verdict_diagnostics(&verdict));
    }
    Ok(outcome)
}

fn cmd_freshness(path: &Path, policy: Option<&Path>, at: Timestamp) -> CmdResult {
    let doc = read_doc(path)?;
    let policy: StalenessPolicy = match policy {
        Some(p) => read_json(p, "staleness policy")?,
        None => StalenessPolicy::default(),
    };
    let report = lifecycle::freshness(&doc, at, &policy);
    let plan = lifecycle::plan_refresh(&doc, at, &policy);
    let mut human = String::new();
    let status = serde_json::to_value(report.document_status).unwrap_or_default();
    let _ = writeln!(human, "document: {}", status.as_str().unwrap_or_default());
    for (section, f) in &report.per_section {
        let f = serde_json::to_value(f).unwrap_or_default();
        let _ = writeln!(
            human,
            "  {section}: {} (expires {})",
            f.as_str().unwrap_or_default(),
            report.expiries[section]
        );
    }
    if let Some(next) = report.next_expiry {
        let _ = writeln!(human, "next expiry: {next}");
    }
    let expired = report.document_status == lifecycle::DocumentStatus::Expired;
    Ok(
        Outcome::ok(&json!({"freshness": report, "refresh_plan": plan}), human)
            .failing(expired, "a critical section has expired"),
    )
}

fn cmd_chain(config: &CliConfig, cmd: ChainCommand) -> CmdResult {
    match cmd {
        ChainCommand::Append { dir, doc, key } => {
            let next = read_doc(&doc)?;
            let chain = lifecycle::read_chain_dir(&dir)
                .map_err(|e| CliError::fail("chain", e.to_string()))?;
            let mut links = chain.links.clone();
            let position = chain.docs.len() as u64;
            match chain.docs.last() {
                None => {
                    if next.identity.version_seq != 0 {
                        return Err(CliError::fail("chain", "a chain starts at version_seq 0"));
                    }
                }
                Some(prev) => {
                    let key_id = key.ok_or_else(|| {
                        CliError::Usage("--key is required to link a revision".into())
                    })?;
                    let key = load_key(config, &key_id)?;
                    let link = lifecycle::append_version(prev, &next, &key)
                        .map_err(|e| CliError::fail("chain", e.to_string()))?;
                    links.push(link);
                }
            }
            lifecycle::write_chain_entry(&dir, position, &next, &links)
                .map_err(|e| CliError::fail("chain", e.to_string()))?;
            let link = links.last().filter(|_| position > 0).cloned();
            Ok(Outcome::ok(
                &json!({"position": position, "link": link}),
                format!("appended revision {position} to {}\n", dir.display()),
            ))
        }
        ChainCommand::Verify { dir, provider } => {
            let chain = lifecycle::read_chain_dir(&dir)
                .map_err(|e| CliError::fail("chain", e.to_string()))?;
            if chain.docs.is_empty() {
                return Err(CliError::Usage(format!(
                    "{} holds no revisions",
                    dir.display()
                )));
            }
            let authorities = load_authorities(config)?;
            let provider_id =
                provider.or_else(|| chain.links.first().map(|l| l.provider_id.clone()));
            let report = match provider_id {
                Some(id) => {
                    let record = authorities
                        .get(&id)
                        .ok_or_else(|| CliError::fail("chain", format!("unknown provider {id}")))?;
                    lifecycle::verify_chain(&chain.docs, &chain.links, record)
                }
                None => lifecycle::verify_chain(&chain.docs, &[], &placeholder(&authorities)),
            };
            let mut human = format!(
                "{} revision(s): {}\n",
                report.length,
                if report.accepted {
                    "accepted"
                } else {
                    "rejected"
                }
            );
            for f in &report.failures {
                let kind = serde_json::to_value(f.kind).unwrap_or_default();
                let _ = writeln!(
                    human,
                    "  link {}: {}",
                    f.link_index,
                    kind.as_str().unwrap_or_default()
                );
            }
            let first = report.first_failure;
            Ok(Outcome::ok(&report, human).failing(
                !report.accepted,
                format!("chain rejected at link {}", first.unwrap_or(0)),
            ))
        }
    }
}

fn placeholder(authorities: &AuthorityRegistry) -> signing::AuthorityRecord {
    authorities
        .values()
        .next()
        .cloned()
        .unwrap_or(signing::AuthorityRecord {
            authority_id: String::new(),
            display_name: String::new(),
            public_key: Default::default(),
            algorithm: signing::Algorithm::Ed25519,
            domains: Vec::new(),
        })
}

fn state_of(doc: &AgentFactsDoc) -> PermissionState {
    doc.permission_state().cloned().unwrap_or_default()
}

fn store_state(
    path: &Path,
    mut doc: AgentFactsDoc,
    state: PermissionState,
) -> Result<(), CliError> {
    doc.auth_permissions
        .get_or_insert_with(Default::default)
        .permission_state = Some(state);
    write_doc(path, &doc)
}

fn perm_error(e: permissions::PermissionError) -> CliError {
    CliError::fail("permission", e.to_string())
}

fn cmd_perms(cmd: PermsCommand) -> CmdResult {
    match cmd {
        PermsCommand::Grant {
            target,
            request,
            pending,
            actor,
        } => {
            let doc = read_doc(&target.doc)?;
            let state = state_of(&doc);
            let at = now_or(target.at);
            let next = match (request, pending) {
                (Some(r), None) => {
                    let req: GrantRequest = read_json(&r, "grant request")?;
                    permissions::grant(&state, &req, &actor, at)
                }
                (None, Some(i)) => permissions::grant_pending(&state, i, &actor, at),
                _ => {
                    return Err(CliError::Usage(
                        "give exactly one of --request or --pending".into(),
                    ))
                }
            }
            .map_err(perm_error)?;
            let record = next.grants.last().cloned().expect("a grant was added");
            store_state(&target.doc, doc, next)?;
            Ok(Outcome::ok(
                &record,
                format!(
                    "granted #{} on {}\n",
                    record.id, record.grant.resource_pattern
                ),
            ))
        }
        PermsCommand::Check {
            target,
            action,
            resource,
            timezone,
            jurisdiction,
            reviewer,
        } => {
            let doc = read_doc(&target.doc)?;
            let state = state_of(&doc);
            let at = now_or(target.at);
            let ctx = AccessContext::new(at, &timezone, jurisdiction.as_deref(), reviewer)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let (decision, next) = permissions::check(&state, action, &resource, &ctx);
            if next != state {
                store_state(&target.doc, doc, next)?;
            }
            let text = serde_json::to_string(&decision).expect("decisions serialize");
            Ok(Outcome::ok(&decision, format!("{text}\n"))
                .failing(!decision.is_allow(), format!("denied: {text}")))
        }
        PermsCommand::Escalate {
            target,
            request,
            approver,
        } => {
            let doc = read_doc(&target.doc)?;
            let req: GrantRequest = read_json(&request, "grant request")?;
            let next = permissions::escalate(&state_of(&doc), &req, &approver, now_or(target.at))
                .map_err(perm_error)?;
            let record = next.grants.last().cloned().expect("a grant was added");
            store_state(&target.doc, doc, next)?;
            Ok(Outcome::ok(
                &record,
                format!(
                    "escalated #{} on {} until {}\n",
                    record.id,
                    record.grant.resource_pattern,
                    record.expires_at.map(|t| t.to_string()).unwrap_or_default()
                ),
            ))
        }
        PermsCommand::Revoke {
            target,
            grant,
            actor,
            reason,
        } => {
            let doc = read_doc(&target.doc)?;
            let next = permissions::revoke_grant(
                &state_of(&doc),
                grant,
                &actor,
                now_or(target.at),
                &reason,
            )
            .map_err(perm_error)?;
            store_state(&target.doc, doc, next)?;
            Ok(Outcome::ok(
                &json!({"revoked": grant}),
                format!("revoked grant #{grant}\n"),
            ))
        }
        PermsCommand::Revert { target } => {
            let doc = read_doc(&target.doc)?;
            let state = state_of(&doc);
            let at = now_or(target.at);
            let next = permissions::revert_expired(&state, at);
            let reverted: Vec<u64> = next.audit[state.audit.len()..]
                .iter()
                .filter_map(|e| e.detail.get("grant_id").and_then(Value::as_u64))
                .collect();
            let active: Vec<u64> = next.active_grants(at).map(|g| g.id).collect();
            if next != state {
                store_state(&target.doc, doc, next)?;
            }
            Ok(Outcome::ok(
                &json!({"reverted": reverted, "active": active}),
                format!(
                    "reverted {} grant(s); active: {:?}\n",
                    reverted.len(),
                    active
                ),
            ))
        }
        PermsCommand::Schedule { target, schedule } => {
            let doc = read_doc(&target.doc)?;
            let entries: Vec<permissions::ScheduledEscalation> = read_json(&schedule, "schedule")?;
            let state = state_of(&doc);
            let (next, outcomes) = permissions::run_schedule(&state, &entries, now_or(target.at));
            let mut human = String::new();
            for (id, outcome) in &outcomes {
                let _ = writeln!(
                    human,
                    "{id}: {}",
                    serde_json::to_string(outcome).expect("outcomes serialize")
                );
            }
            let refused = outcomes
                .iter()
                .any(|(_, o)| matches!(o, permissions::ScheduleOutcome::Refused { .. }));
            if next != state {
                store_state(&target.doc, doc, next)?;
            }
            let result: Vec<Value> = outcomes
                .iter()
                .map(|(id, o)| {
                    let mut v = serde_json::to_value(o).expect("outcomes serialize");
                    v["id"] = json!(id);
                    v
                })
                .collect();
            Ok(Outcome::ok(&result, human)
                .failing(refused, "some scheduled escalations were refused"))
        }
        PermsCommand::AuditVerify { doc } => {
            let d = read_doc(&doc)?;
            let state = state_of(&d);
            let intact = permissions::verify_audit_chain(&state.audit);
            Ok(Outcome::ok(
                &json!({"intact": intact, "entries": state.audit.len()}),
                format!(
                    "{} audit entries: {}\n",
                    state.audit.len(),
                    if intact { "intact" } else { "BROKEN" }
                ),
            )
            .failing(!intact, "audit chain does not verify"))
        }
    }
}

fn client(url: &str) -> Result<RegistryClient, CliError> {
    RegistryClient::new(url).map_err(|e| CliError::Usage(e.to_string()))
}

fn client_error(e: crate::registry::client::ClientError) -> CliError {
    match e {
        crate::registry::client::ClientError::Http(m) => {
            CliError::Usage(format!("registry unreachable: {m}"))
        }
        other => CliError::fail("registry", other.to_string()),
    }
}

fn cmd_registry(config: &CliConfig, cmd: RegistryCommand, err: &mut dyn Write) -> CmdResult {
    match cmd {
        RegistryCommand::Serve { store, addr, at } => {
            let mut s = RegistryStore::open(&store)
                .map_err(|e| CliError::fail("registry", e.to_string()))?;
            for record in load_authorities(config)?.into_values() {
                if s.authorities().get(&record.authority_id) != Some(&record) {
                    s.add_authority(record)
                        .map_err(|e| CliError::fail("registry", e.to_string()))?;
                }
            }
            let clock = match at {
                Some(t) => AppState::fixed_clock(t),
                None => AppState::system_clock(),
            };
            let state = AppState::new(s, clock);
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            runtime
                .block_on(server::serve(state, addr, |a| {
                    let _ = writeln!(err, "listening on http://{a}");
                }))
                .map_err(|e| CliError::Usage(format!("cannot serve on {addr}: {e}")))?;
            Ok(Outcome::ok(&json!({"stopped": true}), ""))
        }
        RegistryCommand::Publish {
            url,
            doc,
            signatures,
            link,
        } => {
            let req = PublishRequest {
                doc: read_doc(&doc)?,
                signatures: match signatures {
                    Some(p) => read_json::<Vec<SignatureBlock>>(&p, "signature list")?,
                    None => Vec::new(),
                },
                link: match link {
                    Some(p) => Some(read_json(&p, "version link")?),
                    None => None,
                },
            };
            let ack = client(&url)?.publish(&req).map_err(client_error)?;
            Ok(Outcome::ok(
                &ack,
                format!("published {} head {}\n", ack.agent_id, ack.head_seq),
            ))
        }
        RegistryCommand::Fetch {
            url,
            agent,
            policy,
            at,
            out,
        } => {
            let c = client(&url)?;
            let facts = c.facts(&agent).map_err(client_error)?;
            let mut doc = facts.doc.clone();
            for sig in &facts.signatures {
                if !doc.signatures().contains(sig) {
                    doc.attach_signature(sig.clone());
                }
            }
            if let Some(out) = &out {
                write_doc(out, &doc)?;
            }
            let at = now_or(at);
            let policy = match policy.as_deref().or(config.default_policy.as_deref()) {
                Some(p) => Some(read_json::<TrustPolicy>(p, "trust policy")?),
                None => None,
            };
            let verdict = match &policy {
                Some(p) => {
                    let authorities = c.authorities().map_err(client_error)?;
                    Some(
                        trust::evaluate_trust(&doc, p, &authorities, &[], at)
                            .map_err(|e| CliError::Usage(format!("policy: {e}")))?,
                    )
                }
                None => None,
            };
            let mut human = format!(
                "{} revision {} (cached {})\n",
                agent, facts.head_seq, facts.cached_at
            );
            if let Some(v) = &verdict {
                human.push_str(&trust::explain_verdict(v).to_string());
            }
            let untrusted = verdict
                .as_ref()
                .is_some_and(|v| v.overall != Overall::Trusted);
            let diag = verdict
                .as_ref()
                .map(|v| format!("overall: {}", v.overall))
                .unwrap_or_default();
            Ok(
                Outcome::ok(&json!({"facts": facts, "verdict": verdict}), human)
                    .failing(untrusted, diag),
            )
        }
        RegistryCommand::Subscribe {
            url,
            agent,
            webhook,
        } => {
            let resp = client(&url)?
                .subscribe(&agent, &webhook)
                .map_err(client_error)?;
            Ok(Outcome::ok(
                &resp,
                format!(
                    "subscription {} for {}\n",
                    resp.subscription_id, resp.agent_id
                ),
            ))
        }
        RegistryCommand::Deliver {
            store,
            timeout_secs,
        } => {
            let mut s = RegistryStore::open(&store)
                .map_err(|e| CliError::fail("registry", e.to_string()))?;
            let transport = HttpTransport::new(Duration::from_secs(timeout_secs))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let report = s.deliver_pending(&transport);
            let failed = report.outcomes.len() - report.delivered();
            let mut human = String::new();
            for o in &report.outcomes {
                let state = serde_json::to_value(o.state).unwrap_or_default();
                let _ = writeln!(
                    human,
                    "#{} {} {} (attempts {})",
                    o.notification_id,
                    o.webhook_url,
                    state.as_str().unwrap_or_default(),
                    o.attempts
                );
            }
            let _ = writeln!(human, "{} delivered, {failed} pending", report.delivered());
            Ok(Outcome::ok(&report, human).failing(
                failed > 0,
                format!("{failed} notification(s) not delivered"),
            ))
        }
    }
}
