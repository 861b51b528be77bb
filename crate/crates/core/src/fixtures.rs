//! A twelve-API fixture document and deterministic generators of faulty
//! requests against it. Used by the test suites, the benches and the CLI's
//! sample data.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc_model::{normalize_name, ApiDocument, ApiSpec, ExceptionSpec, ParamSpec, ValueType};
use crate::gateways::{ApiResponse, MockApiServer, MockRule};
use crate::orchestrator::{DatasetRecord, GroundTruth};
use crate::request_codec::{serialize_request, ApiRequest, Value, CLOSE_MARKER, OPEN_MARKER};
use crate::retrieval::tokenize;
use crate::static_scanner::ErrorType;

fn param(name: &str, t: ValueType, description: &str, required: bool) -> ParamSpec {
    ParamSpec { name: name.into(), value_type: t, description: description.into(), required }
}

fn api(name: &str, description: &str, params: Vec<ParamSpec>, exceptions: &[(&str, &str)]) -> ApiSpec {
    ApiSpec {
        name: name.into(),
        description: description.into(),
        params,
        exceptions: exceptions
            .iter()
            .map(|(c, m)| ExceptionSpec { code: (*c).into(), message: (*m).into() })
            .collect(),
    }
}

pub fn fixture_document() -> ApiDocument {
    use ValueType::*;
    ApiDocument::new(vec![
        api(
            "route_planning",
            "Plan a driving route between two map coordinates.",
            vec![
                param("origin", String, "Start point given as longitude and latitude.", true),
                param("destination", String, "End point given as longitude and latitude.", true),
                param("mode", String, "Travel mode such as driving or walking.", false),
            ],
            &[
                ("20000", "Longitude precedes latitude."),
                ("20001", "No route connects the two points."),
                ("20002", "Coordinates must be two numbers separated by a comma."),
            ],
        ),
        api(
            "list_medicines",
            "Find the remaining number of a medicine such as aspirin.",
            vec![param("name", String, "Medicine name to look up.", true)],
            &[("404", "Medicine not stocked.")],
        ),
        api(
            "userLogin",
            "Log a user into the account system.",
            vec![
                param("userName", String, "Account user name.", true),
                param("password", String, "Account password secret.", true),
                param("days", Int, "Days the login session stays valid.", false),
            ],
            &[("401", "Wrong password for this account.")],
        ),
        api(
            "get_weather",
            "Get the weather forecast for a city.",
            vec![
                param("city", String, "City for the forecast.", true),
                param("days", Int, "Number of forecast days.", false),
            ],
            &[("404", "Unknown city.")],
        ),
        api(
            "search_hotels",
            "Search hotel rooms available in a city.",
            vec![
                param("city", String, "City to search hotels in.", true),
                param("checkIn", String, "Arrival date at the hotel.", true),
                param("maxPrice", Float, "Highest nightly room price.", false),
            ],
            &[],
        ),
        api(
            "convert_currency",
            "Convert an amount of money between currencies.",
            vec![
                param("amount", Float, "Money amount to convert.", true),
                param("fromCurrency", String, "Source currency code.", true),
                param("toCurrency", String, "Target currency code.", true),
            ],
            &[("422", "Unsupported currency code.")],
        ),
        api(
            "send_email",
            "Send an email message to a recipient.",
            vec![
                param("recipient", String, "Email address of the recipient.", true),
                param("subject", String, "Subject line of the email.", true),
                param("body", String, "Message body text.", true),
                param("cc", List, "Extra addresses to copy.", false),
            ],
            &[],
        ),
        api(
            "createCalendarEvent",
            "Create a calendar event with a title and start time.",
            vec![
                param("title", String, "Event title.", true),
                param("startTime", String, "Event start time in ISO format.", true),
                param("durationMinutes", Int, "Event length in minutes.", true),
                param("attendees", List, "People invited to the event.", false),
            ],
            &[],
        ),
        api(
            "translate_text",
            "Translate text from one language into another.",
            vec![
                param("text", String, "Text to translate.", true),
                param("targetLanguage", String, "Language code to translate into.", true),
                param("formal", Bool, "Use a formal register.", false),
            ],
            &[],
        ),
        api(
            "get_stock_price",
            "Get the latest trading price of a stock ticker.",
            vec![
                param("ticker", String, "Stock ticker symbol.", true),
                param("exchange", String, "Stock exchange name.", false),
            ],
            &[],
        ),
        api(
            "set_thermostat",
            "Set the target temperature of a smart thermostat.",
            vec![
                param("temperature", Float, "Target temperature in degrees.", true),
                param("zone", String, "Heating zone name.", true),
                param("schedule", Tuple, "Start and end hour pair.", false),
            ],
            &[],
        ),
        api(
            "book_restaurant",
            "Book a restaurant table for a party of guests.",
            vec![
                param("restaurant", String, "Restaurant name.", true),
                param("partySize", Int, "Number of guests at the table.", true),
                param("preferences", Dict, "Seating preferences such as outdoor.", false),
            ],
            &[],
        ),
    ])
    .expect("fixture document is valid")
}

/// A user instruction that retrieves `api_name` first.
pub fn fixture_instruction(api_name: &str) -> &'static str {
    match api_name {
        "route_planning" => "Plan a driving route from my office to the airport.",
        "list_medicines" => "I'm trying to find out the remaining number of aspirin.",
        "userLogin" => "Log me into my account system as amy.",
        "get_weather" => "What is the weather forecast for Paris?",
        "search_hotels" => "Search for hotel rooms available in Rome.",
        "convert_currency" => "Convert this amount of money from dollars to euros.",
        "send_email" => "Send an email message to my manager.",
        "createCalendarEvent" => "Create a calendar event titled standup.",
        "translate_text" => "Translate this text into another language.",
        "get_stock_price" => "Get the latest trading price of the ACME stock ticker.",
        "set_thermostat" => "Set the thermostat target temperature to 21 degrees.",
        "book_restaurant" => "Book a restaurant table for a party of four.",
        _ => "Do something useful.",
    }
}

const WORDS: [&str; 12] =
    ["paris", "amber", "report", "aspirin", "kestrel", "harbor", "velvet", "orbit", "maple", "quartz", "linen", "cobalt"];

pub fn sample_value<R: Rng>(t: ValueType, rng: &mut R) -> Value {
    let word = |rng: &mut R| Value::Str((*WORDS.choose(rng).expect("non-empty")).to_string());
    match t {
        ValueType::String => word(rng),
        ValueType::Int => Value::Int(rng.random_range(1..100)),
        // Quarter steps keep the literal exact.
        ValueType::Float => Value::Float(rng.random_range(1..4000) as f64 / 4.0),
        ValueType::Bool => Value::Bool(rng.random()),
        ValueType::List => Value::List((0..rng.random_range(1..=3)).map(|_| word(rng)).collect()),
        ValueType::Tuple => Value::Tuple(vec![Value::Int(rng.random_range(0..12)), Value::Int(rng.random_range(12..24))]),
        ValueType::Dict => Value::Dict(vec![("seat".into(), word(rng))]),
    }
}

/// A value of a type incompatible with `t` under the default type rules.
pub fn wrong_type_value<R: Rng>(t: ValueType, rng: &mut R) -> Value {
    match t {
        ValueType::String | ValueType::Dict | ValueType::Bool => Value::Int(rng.random_range(1..100)),
        ValueType::Int | ValueType::Float | ValueType::List | ValueType::Tuple => {
            Value::Str((*WORDS.choose(rng).expect("non-empty")).to_string())
        }
    }
}

/// A correct request: every required parameter, optional ones at random.
pub fn valid_request<R: Rng>(api: &ApiSpec, rng: &mut R) -> ApiRequest {
    let mut req = ApiRequest::new(&api.name);
    for p in &api.params {
        if p.required || rng.random_bool(0.5) {
            req = req.arg(&p.name, sample_value(p.value_type, rng));
        }
    }
    req
}

/// Alternative spellings of an identifier: snake, camel, Pascal, upper
/// snake and concatenated lowercase, minus the original.
pub fn name_variants(name: &str) -> Vec<String> {
    let words = tokenize(name);
    let cap = |w: &str| {
        let mut c = w.chars();
        c.next().map(|f| f.to_uppercase().chain(c).collect::<String>()).unwrap_or_default()
    };
    let snake = words.join("_");
    let camel: String = words.iter().enumerate().map(|(i, w)| if i == 0 { w.clone() } else { cap(w) }).collect();
    let pascal: String = words.iter().map(|w| cap(w)).collect();
    let mut out = Vec::new();
    for v in [snake.clone(), camel, pascal, snake.to_uppercase(), words.concat()] {
        if v != name && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

const STOPWORDS: [&str; 22] = [
    "a", "an", "the", "of", "for", "to", "in", "into", "with", "and", "or", "as", "such", "from", "on", "by", "at",
    "get", "set", "two", "one", "this",
];

fn content_words(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokenize(text) {
        if t.len() >= 3 && !STOPWORDS.contains(&t.as_str()) && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Word triples then pairs, in text order, joined with underscores.
fn word_combinations(words: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let n = words.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.push(format!("{}_{}_{}", words[i], words[j], words[k]));
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            out.push(format!("{}_{}", words[i], words[j]));
        }
    }
    out
}

/// Invented API names built from the words of `api`'s description. None of
/// them is documented or a spelling variant of a documented name.
pub fn semantic_name_candidates(api: &ApiSpec, doc: &ApiDocument) -> Vec<String> {
    word_combinations(&content_words(&api.description))
        .into_iter()
        .filter(|c| doc.apis.iter().all(|a| normalize_name(&a.name) != normalize_name(c)))
        .collect()
}

/// Invented parameter names built from the words of a parameter's
/// description. None of them is, or normalizes to, any documented
/// parameter.
pub fn semantic_param_candidates(p: &ParamSpec, doc: &ApiDocument) -> Vec<String> {
    let mut words = content_words(&p.description);
    if words.len() == 1 {
        words.extend(content_words(&p.name).into_iter().filter(|w| !words.contains(w)).collect::<Vec<_>>());
    }
    word_combinations(&words)
        .into_iter()
        .filter(|c| {
            doc.apis.iter().flat_map(|a| a.params.iter()).all(|q| normalize_name(&q.name) != normalize_name(c))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnparseableKind {
    Prose,
    MissingParen,
    Positional,
    DuplicateKey,
    EmptyBlock,
    UnterminatedString,
    BareName,
}

impl UnparseableKind {
    pub const ALL: [UnparseableKind; 7] = [
        UnparseableKind::Prose,
        UnparseableKind::MissingParen,
        UnparseableKind::Positional,
        UnparseableKind::DuplicateKey,
        UnparseableKind::EmptyBlock,
        UnparseableKind::UnterminatedString,
        UnparseableKind::BareName,
    ];

    pub fn render(self, req: &ApiRequest) -> String {
        let wrap = |s: String| format!("{OPEN_MARKER}{s}{CLOSE_MARKER}");
        let canonical = serialize_request(req);
        let first = req.args.first();
        match self {
            UnparseableKind::Prose => "Sorry, I could not find a suitable API for this request.".into(),
            UnparseableKind::MissingParen => wrap(canonical[..canonical.len() - 1].to_string()),
            UnparseableKind::Positional => wrap(format!(
                "{}({})",
                req.name,
                req.args.iter().map(|(_, v)| v.to_literal()).collect::<Vec<_>>().join(", ")
            )),
            UnparseableKind::DuplicateKey => match first {
                Some((k, v)) => {
                    let inner = &canonical[req.name.len() + 1..canonical.len() - 1];
                    wrap(format!("{}({inner}, {k}={})", req.name, v.to_literal()))
                }
                None => wrap(format!("{}(x=1, x=2)", req.name)),
            },
            UnparseableKind::EmptyBlock => wrap(String::new()),
            UnparseableKind::UnterminatedString => wrap(format!("{}(q=\"open)", req.name)),
            UnparseableKind::BareName => wrap(req.name.clone()),
        }
    }
}

/// One injected fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fault {
    Unparseable(UnparseableKind),
    /// Another documented API.
    WrongApi { to: String },
    /// A spelling variant of the right name.
    LiteralName { to: String },
    /// An invented name built from the API's description words.
    SemanticName { to: String },
    /// Key renamed to a parameter of another API.
    ForeignParam { param: String, key: String },
    /// Key renamed to a spelling variant.
    LiteralParam { param: String, key: String },
    /// Key renamed to an invented name built from the parameter's
    /// description words.
    SemanticParam { param: String, key: String },
    WrongType { param: String },
}

impl Fault {
    /// The class this fault produces on its own. Semantic faults assume the
    /// invented name clears the similarity threshold.
    pub fn nominal_class(&self) -> ErrorType {
        match self {
            Fault::Unparseable(_) => ErrorType::E1,
            Fault::WrongApi { .. } => ErrorType::E2_1,
            Fault::LiteralName { .. } => ErrorType::E2_2,
            Fault::SemanticName { .. } => ErrorType::E2_3,
            Fault::ForeignParam { .. } => ErrorType::E3_1,
            Fault::LiteralParam { .. } => ErrorType::E3_2,
            Fault::SemanticParam { .. } => ErrorType::E3_3,
            Fault::WrongType { .. } => ErrorType::E4_1,
        }
    }

    pub fn is_semantic(&self) -> bool {
        matches!(self, Fault::SemanticName { .. } | Fault::SemanticParam { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedSample {
    pub id: String,
    pub api: String,
    pub instruction: String,
    pub truth: ApiRequest,
    pub corrupted: Option<ApiRequest>,
    pub faults: Vec<Fault>,
    /// The model output the scanner sees.
    pub output: String,
}

impl CorruptedSample {
    /// The lowest nominal class among the faults.
    pub fn nominal_class(&self) -> ErrorType {
        self.faults.iter().map(Fault::nominal_class).min().unwrap_or(ErrorType::NONE)
    }
}

fn rename_key(req: &mut ApiRequest, from: &str, to: &str) {
    if let Some(slot) = req.args.iter_mut().find(|(k, _)| k == from) {
        slot.0 = to.to_string();
    }
}

/// Applies `faults` to `truth` and renders the model output.
pub fn apply_faults<R: Rng>(truth: &ApiRequest, doc: &ApiDocument, faults: &[Fault], rng: &mut R) -> (Option<ApiRequest>, String) {
    if let Some(Fault::Unparseable(kind)) = faults.iter().find(|f| matches!(f, Fault::Unparseable(_))) {
        return (None, kind.render(truth));
    }
    let api = doc.lookup(&truth.name).expect("truth API is documented");
    let mut req = truth.clone();
    for f in faults {
        match f {
            Fault::Unparseable(_) => unreachable!(),
            Fault::WrongApi { to } | Fault::LiteralName { to } | Fault::SemanticName { to } => req.name = to.clone(),
            Fault::ForeignParam { param, key } | Fault::LiteralParam { param, key } | Fault::SemanticParam { param, key } => {
                rename_key(&mut req, param, key)
            }
            Fault::WrongType { param } => {
                let t = api.param(param).expect("documented parameter").value_type;
                if let Some(slot) = req.args.iter_mut().find(|(k, _)| k == param) {
                    slot.1 = wrong_type_value(t, rng);
                }
            }
        }
    }
    let output = format!("{OPEN_MARKER}{}{CLOSE_MARKER}", serialize_request(&req));
    (Some(req), output)
}

/// The fault classes of the classification corpus, in order.
pub const CORPUS_CLASSES: [ErrorType; 8] = [
    ErrorType::E1,
    ErrorType::E2_1,
    ErrorType::E2_2,
    ErrorType::E2_3,
    ErrorType::E3_1,
    ErrorType::E3_2,
    ErrorType::E3_3,
    ErrorType::E4_1,
];

/// Candidate single faults of class `class` for `truth`.
pub fn faults_of_class(class: ErrorType, truth: &ApiRequest, doc: &ApiDocument) -> Vec<Fault> {
    let api = doc.lookup(&truth.name).expect("truth API is documented");
    let present: Vec<&ParamSpec> = truth.args.iter().filter_map(|(k, _)| api.param(k)).collect();
    let foreign_names = |key: &str| doc.apis.iter().any(|a| a.name != api.name && a.has_param(key));
    let any_param_named = |key: &str| doc.apis.iter().any(|a| a.has_param(key));
    match class {
        ErrorType::E1 => UnparseableKind::ALL.iter().map(|k| Fault::Unparseable(*k)).collect(),
        ErrorType::E2_1 => doc.apis.iter().filter(|a| a.name != api.name).map(|a| Fault::WrongApi { to: a.name.clone() }).collect(),
        ErrorType::E2_2 => name_variants(&api.name)
            .into_iter()
            .filter(|v| doc.lookup(v).is_none())
            .map(|to| Fault::LiteralName { to })
            .collect(),
        ErrorType::E2_3 => semantic_name_candidates(api, doc).into_iter().map(|to| Fault::SemanticName { to }).collect(),
        ErrorType::E3_1 => {
            let mut out = Vec::new();
            for p in &present {
                for other in doc.apis.iter().filter(|a| a.name != api.name) {
                    for q in &other.params {
                        if !api.has_param(&q.name) && !truth.args.iter().any(|(k, _)| k == &q.name) {
                            out.push(Fault::ForeignParam { param: p.name.clone(), key: q.name.clone() });
                        }
                    }
                }
            }
            out
        }
        ErrorType::E3_2 => present
            .iter()
            .flat_map(|p| {
                name_variants(&p.name)
                    .into_iter()
                    .filter(|v| !any_param_named(v) && !foreign_names(v))
                    .map(|key| Fault::LiteralParam { param: p.name.clone(), key })
            })
            .collect(),
        ErrorType::E3_3 => present
            .iter()
            .flat_map(|p| {
                semantic_param_candidates(p, doc)
                    .into_iter()
                    .map(|key| Fault::SemanticParam { param: p.name.clone(), key })
            })
            .collect(),
        ErrorType::E4_1 => present.iter().map(|p| Fault::WrongType { param: p.name.clone() }).collect(),
        _ => Vec::new(),
    }
}

/// `per_class` samples for each class in [`CORPUS_CLASSES`], cycling over
/// the APIs of the fixture document. Deterministic for a given seed.
pub fn classification_corpus(doc: &ApiDocument, per_class: usize, seed: u64) -> Vec<CorruptedSample> {
    let mut out = Vec::with_capacity(per_class * CORPUS_CLASSES.len());
    for (ci, class) in CORPUS_CLASSES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((ci as u64 + 1) << 32));
        let mut i = 0;
        let mut attempt = 0;
        while i < per_class {
            let api = &doc.apis[(i + attempt) % doc.len()];
            let truth = valid_request(api, &mut rng);
            let candidates = faults_of_class(*class, &truth, doc);
            if candidates.is_empty() {
                attempt += 1;
                continue;
            }
            // Walk the candidate list so samples on the same API differ.
            let fault = candidates[(i / doc.len()) % candidates.len()].clone();
            let faults = vec![fault];
            let (corrupted, output) = apply_faults(&truth, doc, &faults, &mut rng);
            out.push(CorruptedSample {
                id: format!("{}-{i:02}", class.as_str()),
                api: api.name.clone(),
                instruction: fixture_instruction(&api.name).into(),
                truth,
                corrupted,
                faults,
                output,
            });
            i += 1;
        }
    }
    out
}

/// One request with a single random fault of a random class.
pub fn random_single_fault<R: Rng>(doc: &ApiDocument, rng: &mut R) -> CorruptedSample {
    loop {
        let api = doc.apis.choose(rng).expect("non-empty document");
        let truth = valid_request(api, rng);
        let class = *CORPUS_CLASSES.choose(rng).expect("non-empty");
        let Some(fault) = faults_of_class(class, &truth, doc).choose(rng).cloned() else { continue };
        let faults = vec![fault];
        let (corrupted, output) = apply_faults(&truth, doc, &faults, rng);
        return CorruptedSample {
            id: String::new(),
            api: api.name.clone(),
            instruction: fixture_instruction(&api.name).into(),
            truth,
            corrupted,
            faults,
            output,
        };
    }
}

/// One request with two or more simultaneous faults. At most one fault
/// touches the name and each parameter is touched at most once.
pub fn random_multi_fault<R: Rng>(doc: &ApiDocument, rng: &mut R) -> CorruptedSample {
    loop {
        let api = doc.apis.choose(rng).expect("non-empty document");
        let truth = valid_request(api, rng);
        let mut faults: Vec<Fault> = Vec::new();
        let mut used_params: Vec<String> = Vec::new();
        let mut used_keys: Vec<String> = Vec::new();
        let wanted = rng.random_range(2..=4);
        let mut name_taken = false;
        for _ in 0..wanted * 4 {
            if faults.len() >= wanted {
                break;
            }
            let class = *CORPUS_CLASSES.choose(rng).expect("non-empty");
            if class == ErrorType::E1 && rng.random_bool(0.7) {
                continue;
            }
            let Some(f) = faults_of_class(class, &truth, doc).choose(rng).cloned() else { continue };
            let ok = match &f {
                Fault::Unparseable(_) => !faults.iter().any(|g| matches!(g, Fault::Unparseable(_))),
                Fault::WrongApi { .. } | Fault::LiteralName { .. } | Fault::SemanticName { .. } => !name_taken,
                Fault::ForeignParam { param, key } | Fault::LiteralParam { param, key } | Fault::SemanticParam { param, key } => {
                    !used_params.contains(param) && !used_keys.contains(key)
                }
                Fault::WrongType { param } => !used_params.contains(param),
            };
            if !ok {
                continue;
            }
            match &f {
                Fault::WrongApi { .. } | Fault::LiteralName { .. } | Fault::SemanticName { .. } => name_taken = true,
                Fault::ForeignParam { param, key } | Fault::LiteralParam { param, key } | Fault::SemanticParam { param, key } => {
                    used_params.push(param.clone());
                    used_keys.push(key.clone());
                }
                Fault::WrongType { param } => used_params.push(param.clone()),
                Fault::Unparseable(_) => {}
            }
            faults.push(f);
        }
        if faults.len() < 2 {
            continue;
        }
        let (corrupted, output) = apply_faults(&truth, doc, &faults, rng);
        return CorruptedSample {
            id: String::new(),
            api: api.name.clone(),
            instruction: fixture_instruction(&api.name).into(),
            truth,
            corrupted,
            faults,
            output,
        };
    }
}

fn parse_point(s: &str) -> Option<(f64, f64)> {
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Mock behaviour of `route_planning`: points are `"longitude,latitude"`.
/// A point whose first number fits a latitude and whose second does not is
/// answered with info code 20000.
pub fn route_planning_handler(req: &ApiRequest) -> ApiResponse {
    let point = |key: &str| match req.get(key) {
        Some(Value::Str(s)) => parse_point(s),
        _ => None,
    };
    let (Some(o), Some(d)) = (point("origin"), point("destination")) else {
        return ApiResponse::new(400, "status:0 info:INVALID_PARAMS info_code:20002");
    };
    let reversed = |(a, b): (f64, f64)| a.abs() <= 90.0 && b.abs() > 90.0;
    if reversed(o) || reversed(d) {
        return ApiResponse::new(400, "status:0 info:INVALID_PARAMS info_code:20000");
    }
    ApiResponse::ok(format!("status:1 route:{},{}->{},{} distance_km:1068", o.0, o.1, d.0, d.1))
}

/// Every fixture API answers 200, except `route_planning`, which checks
/// coordinate order.
pub fn fixture_executor(doc: &ApiDocument) -> MockApiServer {
    MockApiServer::for_document(doc, Vec::new()).route("route_planning", route_planning_handler)
}

/// A small benchmark: dataset lines, a per-task model script, and mock
/// rules, all against [`fixture_document`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFixture {
    pub records: Vec<DatasetRecord>,
    pub script: BTreeMap<String, Vec<String>>,
    pub rules: Vec<MockRule>,
}

fn block(req: &str) -> String {
    format!("{OPEN_MARKER}{req}{CLOSE_MARKER}")
}

pub fn bench_fixture() -> BenchFixture {
    let doc = fixture_document();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut records = Vec::new();
    let mut script = BTreeMap::new();
    let mut push = |id: String, api: &str, truth: &str, replies: Vec<String>| {
        records.push(DatasetRecord {
            id: id.clone(),
            instruction: fixture_instruction(api).into(),
            ground_truth: Some(GroundTruth::One(truth.into())),
            doc: None,
            output: replies.first().cloned(),
        });
        script.insert(id, replies);
    };
    let clean = ["get_weather", "convert_currency", "send_email", "translate_text", "get_stock_price", "book_restaurant"];
    for (i, name) in clean.iter().enumerate() {
        let truth = serialize_request(&valid_request(doc.lookup(name).expect("fixture API"), &mut rng));
        push(format!("task-{i:02}"), name, &truth, vec![block(&truth)]);
    }
    let login = r#"userLogin(userName="amy", password="hunter2")"#;
    push("task-06".into(), "userLogin", login, vec![block(r#"user_login(userName="amy", password="hunter2")"#), block(login)]);
    let weather = r#"get_weather(city="paris", days=3)"#;
    push("task-07".into(), "get_weather", weather, vec![block(r#"get_weather(town="paris", days=3)"#), block(weather)]);
    let route = r#"route_planning(origin="116.40,39.90", destination="121.47,31.23")"#;
    push(
        "task-08".into(),
        "route_planning",
        route,
        vec![
            block(r#"route_planning(origin="39.90,116.40", destination="31.23,121.47")"#),
            format!("Thought: the longitude must come before the latitude.\n{}", block(route)),
        ],
    );
    push(
        "task-09".into(),
        "set_thermostat",
        r#"set_thermostat(temperature=21.0, zone="living")"#,
        vec!["I am not able to help with that.".into()],
    );
    let mut when = serde_json::Map::new();
    when.insert("origin".into(), serde_json::json!("39.90,116.40"));
    let rules = vec![MockRule {
        api: "route_planning".into(),
        when,
        status: 400,
        body: "status:0 info:INVALID_PARAMS info_code:20000".into(),
    }];
    BenchFixture { records, script, rules }
}
