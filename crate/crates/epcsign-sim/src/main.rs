//! Command-line front end: key management, token signing and verification,
//! scenario simulation, model comparison, and a randomized attack campaign.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad usage or invalid scenario,
//! 3 token verification rejected, 4 attack-suite security regression.

use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use signepc::model::UserId;
use signepc::nodes::{Message, Model, NodeId, SignerState};
use signepc::pki::{self, KeyBundle, PrivateKeyFile};
use signepc::scenario::{build_network, CryptoMode, ScenarioConfig, ScenarioError};
use signepc::sim::{compare_models, run_scenario};
use signepc::token::{self, AccessRight, CheckOutcome, ExpiryWindow};

#[derive(Parser)]
#[command(name = "epcsign-sim", version, about = "Signed-capability discovery network simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a signing keypair and write the public and private files.
    Keygen(KeygenArgs),
    /// Issue a signed capability token.
    TokenSign(TokenSignArgs),
    /// Check a token the way a repository would.
    TokenVerify(TokenVerifyArgs),
    /// Simulate one scenario and print its report.
    RunSim(RunSimArgs),
    /// Run a scenario across models and fan-outs and tabulate the load.
    Compare(CompareArgs),
    /// Replay captured capabilities through the four attack classes.
    AttackSuite(AttackSuiteArgs),
    /// Deliver one message to one node and print its replies.
    NodeEval(NodeEvalArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Modulus size in bits.
    #[arg(long, default_value_t = 2048)]
    bits: usize,
    /// Deterministic generation from this seed (otherwise OS randomness).
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch second after which the key stops being valid (inclusive).
    #[arg(long, default_value_t = u64::MAX)]
    valid_until: u64,
    /// Permit 1024-bit test keys.
    #[arg(long)]
    allow_weak: bool,
    /// Directory the key files are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TokenSignArgs {
    /// Private key file produced by keygen.
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    userid: String,
    #[arg(long)]
    epc: String,
    #[arg(long)]
    epcis_url: String,
    /// Attribute scope entries; repeat for several. Empty means full access.
    #[arg(long = "scope")]
    scope: Vec<String>,
    /// Epoch seconds of issue; wall clock when omitted.
    #[arg(long)]
    now: Option<u64>,
    #[arg(long, default_value_t = 86_400)]
    window_seconds: u64,
    /// Write the token here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TokenVerifyArgs {
    /// Public key bundle of the trusted issuer.
    #[arg(long = "pub")]
    pub_key: PathBuf,
    /// Token file ('-' for stdin).
    #[arg(long)]
    token: PathBuf,
    /// Identity of the user presenting the token.
    #[arg(long)]
    userid: String,
    /// Epoch seconds of the check; wall clock when omitted.
    #[arg(long)]
    now: Option<u64>,
    #[arg(long, default_value_t = 86_400)]
    window_seconds: u64,
}

#[derive(Args)]
struct RunSimArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompareFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Models to run; defaults to all three.
    #[arg(long, value_delimiter = ',', default_values = ["directory-open", "secure-epcds", "sign-epc"])]
    models: Vec<String>,
    /// Repository queries per transaction; one run per value.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 5, 25])]
    fanouts: Vec<u64>,
    #[arg(long, value_enum, default_value_t = CompareFormat::Csv)]
    format: CompareFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackSuiteArgs {
    /// Scenario that defines the network; must use the sign-epc model.
    #[arg(long)]
    scenario: PathBuf,
    /// User id mounting the attacks (replay uses other users' grants).
    #[arg(long)]
    attacker: String,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct NodeEvalArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// JSON file holding one message envelope ('-' for stdin).
    #[arg(long)]
    message: PathBuf,
    /// Epoch seconds of delivery; the scenario start time when omitted.
    #[arg(long)]
    now: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] signepc::sim::SimError),
    #[error("{0}")]
    Pki(#[from] pki::PkiError),
    #[error("bad token: {0}")]
    Token(#[from] token::TokenError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Io { .. } => ExitCode::from(1),
            CliError::Scenario(_) | CliError::Usage(_) | CliError::Pki(_) => ExitCode::from(2),
            CliError::Sim(_) => ExitCode::from(1),
            CliError::Token(_) | CliError::Json(_) => ExitCode::from(2),
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    if path.as_os_str() == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|source| CliError::Io { path: "<stdin>".into(), source })?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn wall_or(now: Option<u64>) -> u64 {
    now.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .expect("system clock before the epoch")
            .as_secs()
    })
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = read_input(path)?;
    Ok(ScenarioConfig::from_json(&text)?)
}

fn run(cmd: Cmd) -> Result<ExitCode, CliError> {
    match cmd {
        Cmd::Keygen(a) => keygen(a),
        Cmd::TokenSign(a) => token_sign(a),
        Cmd::TokenVerify(a) => token_verify(a),
        Cmd::RunSim(a) => run_sim(a),
        Cmd::Compare(a) => compare(a),
        Cmd::AttackSuite(a) => attack_suite(a),
        Cmd::NodeEval(a) => node_eval(a),
    }
}

fn keygen(a: KeygenArgs) -> Result<ExitCode, CliError> {
    let kp = if a.allow_weak {
        pki::generate_keypair_allow_weak(a.bits, a.valid_until, a.seed)?
    } else {
        pki::generate_keypair(a.bits, a.valid_until, a.seed)?
    };
    let pub_path = a.out_dir.join(format!("{}.pub.json", kp.key_id));
    let key_path = a.out_dir.join(format!("{}.key.json", kp.key_id));
    let bundle = serde_json::to_string_pretty(&KeyBundle::from_keypair(&kp))?;
    let private = serde_json::to_string_pretty(&PrivateKeyFile::from_keypair(&kp))?;
    std::fs::write(&pub_path, bundle + "\n").map_err(|source| CliError::Io {
        path: pub_path.display().to_string(),
        source,
    })?;
    std::fs::write(&key_path, private + "\n").map_err(|source| CliError::Io {
        path: key_path.display().to_string(),
        source,
    })?;
    println!("{}", kp.key_id);
    println!("public:  {}", pub_path.display());
    println!("private: {}", key_path.display());
    Ok(ExitCode::SUCCESS)
}

fn token_sign(a: TokenSignArgs) -> Result<ExitCode, CliError> {
    let key_file: PrivateKeyFile = serde_json::from_str(&read_input(&a.key)?)?;
    let kp = key_file.keypair()?;
    let userid = UserId::new(a.userid).map_err(|e| CliError::Usage(e.to_string()))?;
    let epc = signepc::model::EpcCode::parse(&a.epc).map_err(|e| CliError::Usage(e.to_string()))?;
    let window = ExpiryWindow::new(a.window_seconds)?;
    let now = wall_or(a.now);
    if pki::check_key_expiry(kp.valid_until, now) == pki::KeyStatus::Expired {
        return Err(CliError::Usage(format!(
            "signing key expired at {} (now {})",
            kp.valid_until, now
        )));
    }
    let rights = AccessRight {
        userid: userid.clone(),
        epc,
        epcis_url: a.epcis_url,
        scope: a.scope.into_iter().collect(),
    };
    let label = window.label_at(now);
    let digest = token::make_digest(&userid, &rights, &label);
    let tag = token::sign_tag(&kp, &digest);
    let wire = token::encode_token(&rights, &label, &tag);
    write_output(&a.out, &(wire + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn token_verify(a: TokenVerifyArgs) -> Result<ExitCode, CliError> {
    let bundle: KeyBundle = serde_json::from_str(&read_input(&a.pub_key)?)?;
    let verify_key = bundle.verify_key()?;
    let (rights, _label, tag) = token::decode_token(&read_input(&a.token)?)?;
    let requester = UserId::new(a.userid).map_err(|e| CliError::Usage(e.to_string()))?;
    let window = ExpiryWindow::new(a.window_seconds)?;
    let now = wall_or(a.now);

    if tag.key_id != bundle.key_id {
        println!("REJECT signature-invalid (key id {} is not trusted)", tag.key_id);
        return Ok(ExitCode::from(3));
    }
    if pki::check_key_expiry(bundle.valid_until, now) == pki::KeyStatus::Expired {
        println!("REJECT signer-key-expired");
        return Ok(ExitCode::from(3));
    }
    match token::check_token(&verify_key, &requester, &rights, &tag, now, &window) {
        CheckOutcome::Accept => {
            println!("ACCEPT");
            Ok(ExitCode::SUCCESS)
        }
        CheckOutcome::Reject(reason) => {
            println!("REJECT {}", reason.as_str());
            Ok(ExitCode::from(3))
        }
    }
}

fn run_sim(a: RunSimArgs) -> Result<ExitCode, CliError> {
    let cfg = load_scenario(&a.scenario)?;
    let report = run_scenario(&cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    write_output(&a.out, &(json + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn compare(a: CompareArgs) -> Result<ExitCode, CliError> {
    let cfg = load_scenario(&a.scenario)?;
    let models = a
        .models
        .iter()
        .map(|m| {
            serde_json::from_value::<Model>(serde_json::Value::String(m.clone()))
                .map_err(|_| CliError::Usage(format!("unknown model '{m}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if a.fanouts.is_empty() || a.fanouts.contains(&0) {
        return Err(CliError::Usage("fanouts must be positive".into()));
    }
    let report = compare_models(&cfg, &models, &a.fanouts)?;
    let text = match a.format {
        CompareFormat::Csv => report.to_csv(),
        CompareFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
    };
    write_output(&a.out, &text)?;
    Ok(ExitCode::SUCCESS)
}

fn attack_suite(a: AttackSuiteArgs) -> Result<ExitCode, CliError> {
    let cfg = load_scenario(&a.scenario)?;
    if cfg.model != Model::SignEpc {
        return Err(CliError::Usage(
            "attack-suite needs a sign-epc scenario (tokens to capture)".into(),
        ));
    }
    let net = build_network(&cfg)?;
    let attacker = UserId::new(a.attacker).map_err(|e| CliError::Usage(e.to_string()))?;
    if net.epcds.registry.company_of(&attacker).is_none() {
        return Err(CliError::Usage(format!(
            "attacker '{attacker}' is not a user of the scenario"
        )));
    }
    let rogue = match cfg.crypto.mode {
        CryptoMode::Modeled => SignerState::modeled(a.seed ^ 0xdead_beef, u64::MAX),
        CryptoMode::Real => {
            let bits = if cfg.crypto.allow_weak { 1024 } else { 2048 };
            SignerState::Rsa(pki::generate_keypair_allow_weak(
                bits,
                u64::MAX,
                Some(a.seed ^ 0xdead_beef),
            )?)
        }
    };
    let mut epcis = net.epcis;
    // the campaign probes token handling on an operational network, so any
    // staged proof-of-possession round is taken as already completed
    let trust = net.epcds.signer.trust_record();
    for node in epcis.values_mut() {
        node.trust_signer(trust.clone());
    }
    let report = signepc::nodes::run_attack_suite(
        &net.epcds,
        &mut epcis,
        &attacker,
        &rogue,
        a.trials,
        a.seed,
        cfg.start_time,
    );
    if report.vacuous {
        eprintln!("warning: nothing to attack (no trials or no grants); vacuous pass");
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("security regression: an attack was accepted or misclassified");
        Ok(ExitCode::from(4))
    }
}

fn node_eval(a: NodeEvalArgs) -> Result<ExitCode, CliError> {
    let cfg = load_scenario(&a.scenario)?;
    let message: Message = serde_json::from_str(&read_input(&a.message)?)?;
    let now = a.now.unwrap_or(cfg.start_time);
    let mut net = build_network(&cfg)?;
    let (replies, ops) = match &message.to {
        NodeId::Epcds => net.epcds.handle(&message.from, &message.body, now),
        NodeId::Epcis(company) => {
            let Some(node) = net.epcis.get_mut(company) else {
                return Err(CliError::Usage(format!("no repository for company '{company}'")));
            };
            node.handle(&message.from, &message.body, now)
        }
        NodeId::User(_) => {
            return Err(CliError::Usage("users are not simulated handlers".into()))
        }
    };
    let out = serde_json::json!({ "replies": replies, "ops": ops });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}
