//! Scenario and solution files.

use std::path::Path;

use pdmarket_core::utility::DEFAULT_PWL_DELTA;
use pdmarket_core::{Allocation, Buyer, Market, PriceVector, UtilityFn};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub goods: usize,
    pub buyers: Vec<BuyerSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerSpec {
    pub money: f64,
    pub utility: UtilitySpec,
}

/// Either `{"family": ..., "params": {...}}` or `{"expr": "..."}`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub family: Option<Family>,
    pub params: Option<Value>,
    pub expr: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    CobbDouglas,
    Ces,
    PwlQuasi,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CobbDouglasParams {
    exponents: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CesParams {
    weights: Vec<f64>,
    rho: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PwlQuasiParams {
    a: f64,
    #[serde(default = "default_delta")]
    delta: f64,
    weights: Option<Vec<f64>>,
}

fn default_delta() -> f64 {
    DEFAULT_PWL_DELTA
}

/// Allocation and prices to certify; any other fields (e.g. a full solve
/// report) are ignored.
#[derive(Debug, Deserialize)]
pub struct SolutionFile {
    pub allocation: Vec<Vec<f64>>,
    pub prices: Vec<f64>,
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn parse<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            CliError::Schema {
                file: path.display().to_string(),
                field,
                message: inner.to_string(),
            }
        } else {
            CliError::Parse {
                file: path.display().to_string(),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        }
    })
}

fn typed<T: DeserializeOwned>(file: &Path, field: &str, v: &Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(v).map_err(|e| CliError::Schema {
        file: file.display().to_string(),
        field: match e.path().to_string().as_str() {
            "." => field.to_string(),
            rest => format!("{field}.{rest}"),
        },
        message: e.into_inner().to_string(),
    })
}

fn utility(file: &Path, i: usize, g: usize, spec: &UtilitySpec) -> Result<UtilityFn, CliError> {
    let field = format!("buyers[{i}].utility");
    let bad = |message: String| CliError::Schema {
        file: file.display().to_string(),
        field: field.clone(),
        message,
    };
    match (spec.family, &spec.params, &spec.expr) {
        (None, None, Some(src)) => UtilityFn::expr(src, g).map_err(|e| CliError::Schema {
            file: file.display().to_string(),
            field: format!("{field}.expr"),
            message: e.to_string(),
        }),
        (Some(family), params, None) => {
            let empty = Value::Object(Default::default());
            let v = params.as_ref().unwrap_or(&empty);
            let at = format!("{field}.params");
            let f = match family {
                Family::Linear => UtilityFn::linear(typed::<LinearParams>(file, &at, v)?.coeffs),
                Family::CobbDouglas => {
                    UtilityFn::cobb_douglas(typed::<CobbDouglasParams>(file, &at, v)?.exponents)
                }
                Family::Ces => {
                    let p: CesParams = typed(file, &at, v)?;
                    UtilityFn::ces(p.weights, p.rho)
                }
                Family::PwlQuasi => {
                    let p: PwlQuasiParams = typed(file, &at, v)?;
                    UtilityFn::pwl_quasi(p.a, p.delta, p.weights.unwrap_or_else(|| vec![1.0; g]))
                }
            };
            f.map_err(|e| bad(e.to_string()))
        }
        (None, Some(_), None) => Err(bad("params given without a family".into())),
        (None, _, None) => Err(bad("expected either `family` or `expr`".into())),
        (_, _, Some(_)) => Err(bad("`expr` cannot be combined with `family` or `params`".into())),
    }
}

pub fn load_market(path: &Path) -> Result<Market, CliError> {
    let text = read(path)?;
    let file: ScenarioFile = parse(path, &text)?;
    let buyers = file
        .buyers
        .iter()
        .enumerate()
        .map(|(i, b)| Ok(Buyer::new(b.money, utility(path, i, file.goods, &b.utility)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Market::new(file.goods, buyers)?)
}

pub fn load_solution(path: &Path) -> Result<(Allocation, PriceVector), CliError> {
    let text = read(path)?;
    let s: SolutionFile = parse(path, &text)?;
    Ok((Allocation::from_rows(&s.allocation)?, PriceVector::new(s.prices)?))
}
