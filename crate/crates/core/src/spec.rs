//! Declarative utility specifications.
//!
//! A specification is a small line-oriented document:
//!
//! ```text
//! space wtp
//! price cost
//! reference 4
//! param cost random neglognormal init=-3.5 init_sd=0.6
//! param travel fixed init=0.6
//! term cost on cost alts=1,2,3
//! term travel on travel alts=1,2,3
//! ```
//!
//! Parameters are kept in declaration order, and every downstream vector
//! indexes parameters by that order. A random parameter contributes two
//! estimated entries, its location and then its spread.

use std::collections::HashSet;
use std::fmt;

use crate::dataset::ChoiceDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Preference,
    Wtp,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::Preference => "preference",
            Space::Wtp => "wtp",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    /// `mean + |sd| * draw`
    Normal,
    /// `-exp(location + |scale| * draw)`, strictly negative.
    NegatedLognormal,
}

impl Distribution {
    fn keyword(self) -> &'static str {
        match self {
            Distribution::Normal => "normal",
            Distribution::NegatedLognormal => "neglognormal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParameterKind {
    Fixed,
    Random(Distribution),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterDef {
    pub name: String,
    pub kind: ParameterKind,
    /// Fixed value, or the location of a random parameter.
    pub init: f64,
    /// Spread start value; random parameters only.
    pub init_sd: f64,
}

impl ParameterDef {
    pub fn is_random(&self) -> bool {
        matches!(self.kind, ParameterKind::Random(_))
    }

    pub fn distribution(&self) -> Option<Distribution> {
        match self.kind {
            ParameterKind::Random(d) => Some(d),
            ParameterKind::Fixed => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermAttribute {
    /// Alternative-specific constant.
    Constant,
    Named(String),
}

impl fmt::Display for TermAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermAttribute::Constant => f.write_str("ASC"),
            TermAttribute::Named(n) => f.write_str(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtilityTerm {
    pub parameter: String,
    pub attribute: TermAttribute,
    pub applies_to: Vec<String>,
    /// Interaction: the effective attribute is `attribute * multiplier`.
    pub multiplier: Option<String>,
}

impl UtilityTerm {
    pub fn applies(&self, alt_id: &str) -> bool {
        self.applies_to.iter().any(|a| a == alt_id)
    }

    pub fn is_constant(&self) -> bool {
        self.attribute == TermAttribute::Constant
    }
}

/// How a parameter enters utility.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParameterRole {
    /// The money-to-utility coefficient φ of a WTP-space model.
    Price,
    /// A money-metric coefficient, multiplied by φ in WTP space.
    Money,
    /// Enters utility directly: every preference-space coefficient and
    /// alternative-specific constants in WTP space.
    Utility,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub space: Space,
    pub price_attribute: Option<String>,
    pub parameters: Vec<ParameterDef>,
    pub terms: Vec<UtilityTerm>,
    pub reference_alternative: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for SyntaxError {}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-')
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    out
}

/// Parses a specification document. Never panics; every problem found is
/// reported with its position.
pub fn parse_model_spec(text: &str) -> Result<ModelSpec, Vec<SyntaxError>> {
    let mut errors = Vec::new();
    let mut space: Option<Space> = None;
    let mut price: Option<(String, usize)> = None;
    let mut reference: Option<String> = None;
    let mut parameters: Vec<(ParameterDef, usize)> = Vec::new();
    let mut terms: Vec<(UtilityTerm, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let tokens = tokenize(content);
        let Some(head) = tokens.first() else { continue };
        let mut err = |column: usize, message: String| {
            errors.push(SyntaxError {
                line: line_no,
                column,
                message,
            })
        };
        match head.text {
            "space" => {
                if tokens.len() != 2 {
                    err(head.column, "expected `space wtp|preference`".into());
                    continue;
                }
                let value = match tokens[1].text {
                    "wtp" => Space::Wtp,
                    "preference" => Space::Preference,
                    other => {
                        err(tokens[1].column, format!("unknown space `{other}`"));
                        continue;
                    }
                };
                if space.replace(value).is_some() {
                    err(head.column, "space declared more than once".into());
                }
            }
            "price" => {
                if tokens.len() != 2 || !is_identifier(tokens[1].text) {
                    err(head.column, "expected `price <attribute>`".into());
                    continue;
                }
                if price.replace((tokens[1].text.to_string(), line_no)).is_some() {
                    err(head.column, "price declared more than once".into());
                }
            }
            "reference" => {
                if tokens.len() != 2 {
                    err(head.column, "expected `reference <alt_id>`".into());
                    continue;
                }
                if reference.replace(tokens[1].text.to_string()).is_some() {
                    err(head.column, "reference declared more than once".into());
                }
            }
            "param" => {
                if tokens.len() < 3 {
                    err(head.column, "expected `param <name> fixed|random ...`".into());
                    continue;
                }
                let name = tokens[1].text;
                if !is_identifier(name) {
                    err(tokens[1].column, format!("invalid parameter name `{name}`"));
                    continue;
                }
                let (kind, rest) = match tokens[2].text {
                    "fixed" => (ParameterKind::Fixed, &tokens[3..]),
                    "random" => {
                        let Some(dist) = tokens.get(3) else {
                            err(tokens[2].column, "random parameter needs a distribution".into());
                            continue;
                        };
                        let d = match dist.text {
                            "normal" => Distribution::Normal,
                            "neglognormal" | "negated_lognormal" => Distribution::NegatedLognormal,
                            other => {
                                err(dist.column, format!("unknown distribution `{other}`"));
                                continue;
                            }
                        };
                        (ParameterKind::Random(d), &tokens[4..])
                    }
                    other => {
                        err(tokens[2].column, format!("expected `fixed` or `random`, found `{other}`"));
                        continue;
                    }
                };
                let mut def = ParameterDef {
                    name: name.to_string(),
                    kind,
                    init: 0.0,
                    init_sd: if kind == ParameterKind::Fixed { 0.0 } else { 0.5 },
                };
                let mut ok = true;
                for tok in rest {
                    let parsed = tok
                        .text
                        .split_once('=')
                        .map(|(k, v)| (k, v.parse::<f64>().ok().filter(|v| v.is_finite())));
                    match parsed {
                        Some(("init", Some(v))) => def.init = v,
                        Some(("init_sd", Some(v))) if def.is_random() => def.init_sd = v,
                        Some(("init_sd", Some(_))) => {
                            err(tok.column, "init_sd is only valid for random parameters".into());
                            ok = false;
                        }
                        Some((_, None)) => {
                            err(tok.column, format!("invalid number in `{}`", tok.text));
                            ok = false;
                        }
                        _ => {
                            err(tok.column, format!("unexpected `{}`", tok.text));
                            ok = false;
                        }
                    }
                }
                if !ok {
                    continue;
                }
                if parameters.iter().any(|(p, _)| p.name == def.name) {
                    err(tokens[1].column, format!("duplicate parameter name `{name}`"));
                    continue;
                }
                parameters.push((def, line_no));
            }
            "term" => {
                // term <param> on <attr|ASC> alts=<ids> [times <attr>]
                if tokens.len() < 5 || tokens[2].text != "on" {
                    err(head.column, "expected `term <param> on <attribute|ASC> alts=<ids> [times <attribute>]`".into());
                    continue;
                }
                let parameter = tokens[1].text.to_string();
                let attribute = match tokens[3].text {
                    "ASC" => TermAttribute::Constant,
                    a if is_identifier(a) => TermAttribute::Named(a.to_string()),
                    a => {
                        err(tokens[3].column, format!("invalid attribute `{a}`"));
                        continue;
                    }
                };
                let Some(alts) = tokens[4].text.strip_prefix("alts=") else {
                    err(tokens[4].column, "expected `alts=<id,id,...>`".into());
                    continue;
                };
                let applies_to: Vec<String> = alts
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
                if applies_to.is_empty() {
                    err(tokens[4].column, "term applies to no alternatives".into());
                    continue;
                }
                let multiplier = match &tokens[5..] {
                    [] => None,
                    [kw, m] if kw.text == "times" && is_identifier(m.text) => Some(m.text.to_string()),
                    [first, ..] => {
                        err(first.column, "expected `times <attribute>`".into());
                        continue;
                    }
                };
                if let (Some(m), TermAttribute::Named(a)) = (&multiplier, &attribute) {
                    if m == a {
                        err(tokens[5].column, "interaction multiplier must differ from the attribute".into());
                        continue;
                    }
                }
                if attribute == TermAttribute::Constant && multiplier.is_some() {
                    // a constant times an attribute is just the attribute
                    err(tokens[5].column, "ASC terms take no multiplier; bind the attribute instead".into());
                    continue;
                }
                terms.push((
                    UtilityTerm {
                        parameter,
                        attribute,
                        applies_to,
                        multiplier,
                    },
                    line_no,
                ));
            }
            other => err(head.column, format!("unknown directive `{other}`")),
        }
    }

    let last_line = text.lines().count().max(1);
    let mut err_at = |line: usize, message: String| {
        errors.push(SyntaxError {
            line,
            column: 1,
            message,
        })
    };
    if parameters.is_empty() {
        err_at(last_line, "no parameters declared".into());
    }
    let space = space.unwrap_or(Space::Preference);
    if space == Space::Wtp && price.is_none() {
        err_at(last_line, "wtp space requires a `price <attribute>` line".into());
    }
    for (term, line) in &terms {
        if !parameters.iter().any(|(p, _)| p.name == term.parameter) {
            err_at(*line, format!("term references unknown parameter `{}`", term.parameter));
        }
    }
    for (p, line) in &parameters {
        if !terms.iter().any(|(t, _)| t.parameter == p.name) {
            err_at(*line, format!("parameter `{}` is not used by any term", p.name));
        }
    }
    if let Some((price_attr, price_line)) = &price {
        let price_terms: Vec<&(UtilityTerm, usize)> = terms
            .iter()
            .filter(|(t, _)| t.attribute == TermAttribute::Named(price_attr.clone()))
            .collect();
        let price_params: HashSet<&str> =
            price_terms.iter().map(|(t, _)| t.parameter.as_str()).collect();
        if space == Space::Wtp {
            if price_params.len() != 1 {
                err_at(
                    *price_line,
                    format!(
                        "wtp space needs exactly one price parameter on `{price_attr}`, found {}",
                        price_params.len()
                    ),
                );
            }
            for (t, line) in &price_terms {
                if t.multiplier.is_some() {
                    err_at(*line, "the price term cannot be an interaction".into());
                }
            }
            for (t, line) in &terms {
                let on_price = t.attribute == TermAttribute::Named(price_attr.clone());
                if price_params.contains(t.parameter.as_str()) && !on_price {
                    err_at(*line, format!("price parameter `{}` may only multiply `{price_attr}`", t.parameter));
                }
            }
        }
    }
    if space == Space::Wtp {
        for (p, line) in &parameters {
            let uses: Vec<bool> = terms
                .iter()
                .filter(|(t, _)| t.parameter == p.name)
                .map(|(t, _)| t.is_constant())
                .collect();
            if uses.contains(&true) && uses.contains(&false) {
                err_at(*line, format!("parameter `{}` mixes ASC and attribute terms", p.name));
            }
        }
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| (e.line, e.column));
        return Err(errors);
    }
    Ok(ModelSpec {
        space,
        price_attribute: price.map(|(p, _)| p),
        parameters: parameters.into_iter().map(|(p, _)| p).collect(),
        terms: terms.into_iter().map(|(t, _)| t).collect(),
        reference_alternative: reference,
    })
}

impl fmt::Display for ModelSpec {
    /// Canonical text; parsing it yields an equal specification.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "space {}", self.space)?;
        if let Some(p) = &self.price_attribute {
            writeln!(f, "price {p}")?;
        }
        if let Some(r) = &self.reference_alternative {
            writeln!(f, "reference {r}")?;
        }
        for p in &self.parameters {
            match p.kind {
                ParameterKind::Fixed => writeln!(f, "param {} fixed init={:?}", p.name, p.init)?,
                ParameterKind::Random(d) => writeln!(
                    f,
                    "param {} random {} init={:?} init_sd={:?}",
                    p.name,
                    d.keyword(),
                    p.init,
                    p.init_sd
                )?,
            }
        }
        for t in &self.terms {
            write!(f, "term {} on {} alts={}", t.parameter, t.attribute, t.applies_to.join(","))?;
            if let Some(m) = &t.multiplier {
                write!(f, " times {m}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl ModelSpec {
    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    /// The coefficient multiplying the price attribute, if any.
    pub fn price_parameter(&self) -> Option<usize> {
        let price = self.price_attribute.as_ref()?;
        let term = self
            .terms
            .iter()
            .find(|t| t.attribute == TermAttribute::Named(price.clone()))?;
        self.parameter_index(&term.parameter)
    }

    pub fn role(&self, parameter: usize) -> ParameterRole {
        if self.space == Space::Preference {
            return ParameterRole::Utility;
        }
        if Some(parameter) == self.price_parameter() {
            return ParameterRole::Price;
        }
        let name = &self.parameters[parameter].name;
        let constant = self
            .terms
            .iter()
            .any(|t| &t.parameter == name && t.is_constant());
        if constant {
            ParameterRole::Utility
        } else {
            ParameterRole::Money
        }
    }

    pub fn n_random(&self) -> usize {
        self.parameters.iter().filter(|p| p.is_random()).count()
    }

    /// Number of estimated entries (random parameters count twice).
    pub fn n_estimated(&self) -> usize {
        self.parameters.len() + self.n_random()
    }

    /// Offset of each parameter's first estimated entry.
    pub fn estimated_offsets(&self) -> Vec<usize> {
        let mut offset = 0;
        self.parameters
            .iter()
            .map(|p| {
                let here = offset;
                offset += if p.is_random() { 2 } else { 1 };
                here
            })
            .collect()
    }

    /// Draw dimension of each random parameter, in declaration order.
    pub fn draw_dimensions(&self) -> Vec<Option<usize>> {
        let mut k = 0;
        self.parameters
            .iter()
            .map(|p| {
                p.is_random().then(|| {
                    k += 1;
                    k - 1
                })
            })
            .collect()
    }

    /// Names of the estimated entries: `name` for fixed parameters and
    /// `name_mean`, `name_sd` for random ones.
    pub fn estimated_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_estimated());
        for p in &self.parameters {
            if p.is_random() {
                out.push(format!("{}_mean", p.name));
                out.push(format!("{}_sd", p.name));
            } else {
                out.push(p.name.clone());
            }
        }
        out
    }

    pub fn initial_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_estimated());
        for p in &self.parameters {
            out.push(p.init);
            if p.is_random() {
                out.push(p.init_sd);
            }
        }
        out
    }

    /// The same specification with every parameter fixed, in preference space.
    /// Used for warm starts.
    pub fn fixed_preference_counterpart(&self) -> ModelSpec {
        ModelSpec {
            space: Space::Preference,
            parameters: self
                .parameters
                .iter()
                .map(|p| ParameterDef {
                    name: p.name.clone(),
                    kind: ParameterKind::Fixed,
                    init: 0.0,
                    init_sd: 0.0,
                })
                .collect(),
            ..self.clone()
        }
    }

    /// The same specification read in preference space.
    pub fn as_preference_space(&self) -> ModelSpec {
        ModelSpec {
            space: Space::Preference,
            ..self.clone()
        }
    }

    /// Every attribute name referenced by a term or the price line.
    pub fn referenced_attributes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |s: &String| {
            if !out.contains(s) {
                out.push(s.clone())
            }
        };
        if let Some(p) = &self.price_attribute {
            push(p);
        }
        for t in &self.terms {
            if let TermAttribute::Named(a) = &t.attribute {
                push(a);
            }
            if let Some(m) = &t.multiplier {
                push(m);
            }
        }
        out
    }
}

/// Cross-checks a specification against a dataset's schema and alternatives.
pub fn validate_spec(spec: &ModelSpec, dataset: &ChoiceDataset) -> Vec<String> {
    let mut out = Vec::new();
    for attr in spec.referenced_attributes() {
        if dataset.attribute_index(&attr).is_none() {
            out.push(format!("attribute `{attr}` is not in the dataset"));
        }
    }
    let alts = dataset.alternative_ids();
    for t in &spec.terms {
        for a in &t.applies_to {
            if !alts.contains(a) {
                out.push(format!(
                    "term `{}` on {} applies to alternative `{a}`, which the dataset does not have",
                    t.parameter, t.attribute
                ));
            }
        }
    }
    if let Some(r) = &spec.reference_alternative {
        if !alts.contains(r) {
            out.push(format!("reference alternative `{r}` is not in the dataset"));
        }
    }
    out
}
