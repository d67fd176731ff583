//! Sample unit: per-product sales totals across all three layers.
//!
//! * `read_sales` (data): loads `<data_dir>/sales.csv` into `sales`.
//! * `compute_totals` (business): sets `total_sales`, a map from product id
//!   to quantity sold times unit price.
//! * `render_column` (ui): appends a `total_sales` column to the table.
//!
//! The unit depends on the host only through the pipeline contract.

use std::path::Path;

use scpa_host::contract::{
    ChainDirective, Envelope, HostContext, LoadReport, PipelineUnit, UnitError, Value, ValueMap,
};

pub const HANDLERS: [&str; 3] = ["read_sales", "compute_totals", "render_column"];

#[derive(Debug, Default)]
pub struct SalesByProduct;

fn text<'a>(map: &'a ValueMap, key: &str) -> Result<&'a str, UnitError> {
    map.get(key)
        .and_then(Value::as_text)
        .ok_or_else(|| UnitError::new(format!("missing text field `{key}`")))
}

fn list<'a>(map: &'a ValueMap, key: &str) -> Result<&'a [Value], UnitError> {
    map.get(key)
        .and_then(Value::as_list)
        .ok_or_else(|| UnitError::new(format!("missing list field `{key}`")))
}

/// Parses `product_id,quantity,date` rows.
pub fn parse_sales(text: &str) -> Result<Vec<ValueMap>, UnitError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next().map(str::trim) {
        Some("product_id,quantity,date") => {}
        other => return Err(UnitError::new(format!("unexpected sales header {other:?}"))),
    }
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let [product_id, quantity, date] = cells[..] else {
                return Err(UnitError::new(format!("bad sales row `{line}`")));
            };
            let quantity: i64 = quantity
                .parse()
                .ok()
                .filter(|q| *q >= 0)
                .ok_or_else(|| UnitError::new(format!("bad quantity in `{line}`")))?;
            Ok(ValueMap::new()
                .with("product_id", product_id)
                .with("quantity", quantity)
                .with("date", date))
        })
        .collect()
}

/// Quantity sold times unit price, per product id. Products without sales
/// get 0.
pub fn totals(products: &[Value], sales: &[Value]) -> Result<ValueMap, UnitError> {
    let mut out = ValueMap::new();
    for p in products {
        let p = p
            .as_map()
            .ok_or_else(|| UnitError::new("product is not a map"))?;
        let id = text(p, "id")?;
        let price = p
            .get("price")
            .and_then(Value::as_decimal)
            .ok_or_else(|| UnitError::new(format!("product `{id}` has no price")))?;
        let mut quantity = 0i64;
        for s in sales {
            let s = s
                .as_map()
                .ok_or_else(|| UnitError::new("sale is not a map"))?;
            if text(s, "product_id")? == id {
                quantity += s.get("quantity").and_then(Value::as_integer).unwrap_or(0);
            }
        }
        out.insert(id, price * quantity as f64);
    }
    Ok(out)
}

/// Decimal totals keep one decimal place at minimum; text is shown as is.
pub fn display_total(v: &Value) -> String {
    match v {
        Value::Decimal(d) if d.fract() == 0.0 => format!("{d:.1}"),
        Value::Text(s) => s.clone(),
        other => other.to_string(),
    }
}

impl SalesByProduct {
    fn read_sales(&self, mut env: Envelope) -> Result<Envelope, UnitError> {
        let dir = text(&env.payload, "data_dir")?;
        let path = Path::new(dir).join("sales.csv");
        let content = std::fs::read_to_string(&path)
            .map_err(|e| UnitError::new(format!("cannot read {}: {e}", path.display())))?;
        let sales = parse_sales(&content)?;
        env.payload.insert(
            "sales",
            sales.into_iter().map(Value::Map).collect::<Vec<_>>(),
        );
        Ok(env)
    }

    fn compute_totals(&self, mut env: Envelope) -> Result<Envelope, UnitError> {
        let totals = totals(
            list(&env.payload, "products")?,
            list(&env.payload, "sales")?,
        )?;
        env.payload.insert("total_sales", totals);
        Ok(env)
    }

    fn render_column(&self, mut env: Envelope) -> Result<Envelope, UnitError> {
        let totals = env
            .payload
            .get("total_sales")
            .and_then(Value::as_map)
            .cloned()
            .ok_or_else(|| UnitError::new("no totals to render"))?;
        let mut columns = list(&env.payload, "columns")?.to_vec();
        columns.push("total_sales".into());
        let rows = list(&env.payload, "rows")?
            .iter()
            .map(|row| {
                let mut row = row
                    .as_map()
                    .cloned()
                    .ok_or_else(|| UnitError::new("row is not a map"))?;
                let id = text(&row, "id")?;
                let cell = totals.get(id).map(display_total).unwrap_or_default();
                row.insert("total_sales", cell);
                Ok(Value::Map(row))
            })
            .collect::<Result<Vec<_>, UnitError>>()?;
        env.payload.insert("columns", columns);
        env.payload.insert("rows", rows);
        Ok(env)
    }
}

impl PipelineUnit for SalesByProduct {
    fn load(&self, _ctx: &HostContext) -> Result<LoadReport, UnitError> {
        Ok(LoadReport {
            handlers: HANDLERS.iter().map(|h| h.to_string()).collect(),
            notes: None,
        })
    }

    fn execute(&self, handler: &str, env: Envelope) -> Result<Envelope, UnitError> {
        match handler {
            "read_sales" => self.read_sales(env),
            "compute_totals" => self.compute_totals(env),
            "render_column" => self.render_column(env),
            other => Err(UnitError::new(format!("no handler `{other}`"))),
        }
    }

    fn next(&self, _handler: &str, _env: &Envelope) -> ChainDirective {
        ChainDirective::Continue
    }
}

scpa_host::export_unit!(SalesByProduct);
