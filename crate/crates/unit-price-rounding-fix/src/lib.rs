//! Sample unit: formats computed sales totals to two decimals.
//!
//! Runs on `business.sales.compute` after the totals are in place and
//! rewrites every decimal in `total_sales` as text with two decimals.
//! Release 1.0.0 binds `truncate_totals`, which cuts digits off (the bug);
//! 1.0.1 binds `round_totals`, which rounds half-up (the fix).

use scpa_host::contract::{
    ChainDirective, Envelope, HostContext, LoadReport, PipelineUnit, UnitError, Value, ValueMap,
};

pub const HANDLERS: [&str; 2] = ["truncate_totals", "round_totals"];

/// Tolerance for binary representation error, in cents.
const EPSILON_CENTS: f64 = 1e-6;

/// Drops everything past the second decimal.
pub fn truncate_cents(value: f64) -> String {
    let cents = (value * 100.0 + EPSILON_CENTS.copysign(value)).trunc();
    format!("{:.2}", cents / 100.0)
}

/// Rounds to the nearest cent, halves away from zero.
pub fn round_cents(value: f64) -> String {
    let cents = (value * 100.0 + EPSILON_CENTS.copysign(value)).round();
    format!("{:.2}", cents / 100.0)
}

#[derive(Debug, Default)]
pub struct PriceRoundingFix;

fn rewrite(env: &mut Envelope, format: fn(f64) -> String) -> Result<(), UnitError> {
    let Some(totals) = env.payload.get("total_sales").and_then(Value::as_map) else {
        // Nothing computed yet; nothing to format.
        return Ok(());
    };
    let formatted: ValueMap = totals
        .iter()
        .map(|(id, v)| {
            let v = match v {
                Value::Decimal(d) => Value::Text(format(*d)),
                Value::Integer(i) => Value::Text(format(*i as f64)),
                other => other.clone(),
            };
            (id.to_owned(), v)
        })
        .collect();
    env.payload.insert("total_sales", formatted);
    Ok(())
}

impl PipelineUnit for PriceRoundingFix {
    fn load(&self, _ctx: &HostContext) -> Result<LoadReport, UnitError> {
        Ok(LoadReport {
            handlers: HANDLERS.iter().map(|h| h.to_string()).collect(),
            notes: None,
        })
    }

    fn execute(&self, handler: &str, mut env: Envelope) -> Result<Envelope, UnitError> {
        match handler {
            "truncate_totals" => rewrite(&mut env, truncate_cents)?,
            "round_totals" => rewrite(&mut env, round_cents)?,
            other => return Err(UnitError::new(format!("no handler `{other}`"))),
        }
        Ok(env)
    }

    fn next(&self, _handler: &str, _env: &Envelope) -> ChainDirective {
        ChainDirective::Continue
    }
}

scpa_host::export_unit!(PriceRoundingFix);
