//! A small products-and-sales application with three extension points.
//!
//! Without units the app lists products. Everything else (reading sales,
//! computing totals, adding a column) is left to pipeline units bound to
//! [`EP_READ`], [`EP_COMPUTE`] and [`EP_RENDER`]; the app only passes a
//! payload down the layers and prints whatever table comes back.

mod records;
pub mod samples;

use std::fs;
use std::path::{Path, PathBuf};

use crate::chain::ChainError;
use crate::contract::{Value, ValueMap};
use crate::host::Host;

pub use records::{
    is_iso_date, parse_products, parse_sales, ProductRecord, RecordError, SaleRecord,
};

pub const EP_READ: &str = "data.sales.read";
pub const EP_COMPUTE: &str = "business.sales.compute";
pub const EP_RENDER: &str = "ui.product.render";

pub const PRODUCTS_FILE: &str = "products.csv";
pub const SALES_FILE: &str = "sales.csv";

/// Seed data shipped with the app.
pub const SEED_PRODUCTS: &str = include_str!("../../data/demo/products.csv");
pub const SEED_SALES: &str = include_str!("../../data/demo/sales.csv");

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Records { path: PathBuf, source: RecordError },
}

/// Writes the seed fixtures into `dir`.
pub fn seed(dir: &Path) -> Result<(), DemoError> {
    let io = |path: PathBuf| move |source| DemoError::Io { path, source };
    fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    for (name, text) in [(PRODUCTS_FILE, SEED_PRODUCTS), (SALES_FILE, SEED_SALES)] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io(path.clone()))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DemoApp {
    data_dir: PathBuf,
    products: Vec<ProductRecord>,
}

impl DemoApp {
    /// Loads and checks the fixtures in `data_dir`. `sales.csv` is
    /// optional; when present every sale must name a known product.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, DemoError> {
        let data_dir = data_dir.into();
        let read = |name: &str| {
            let path = data_dir.join(name);
            fs::read_to_string(&path).map_err(|source| DemoError::Io { path, source })
        };
        let products =
            parse_products(&read(PRODUCTS_FILE)?).map_err(|source| DemoError::Records {
                path: data_dir.join(PRODUCTS_FILE),
                source,
            })?;
        if data_dir.join(SALES_FILE).exists() {
            parse_sales(&read(SALES_FILE)?, &products).map_err(|source| DemoError::Records {
                path: data_dir.join(SALES_FILE),
                source,
            })?;
        }
        Ok(Self { data_dir, products })
    }

    pub fn products(&self) -> &[ProductRecord] {
        &self.products
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    /// Renders the product listing through `host`.
    pub fn render(&self, host: &Host) -> String {
        self.render_with(|ep, payload| host.dispatch(ep, payload))
    }

    /// Renders the product listing, sending each layer's payload through
    /// `dispatch`. A failed dispatch falls back to that layer's input.
    pub fn render_with(
        &self,
        mut dispatch: impl FnMut(&str, ValueMap) -> Result<ValueMap, ChainError>,
    ) -> String {
        let mut call = |ep: &str, payload: ValueMap| match dispatch(ep, payload.clone()) {
            Ok(out) => out,
            Err(e) => {
                log::warn!("{ep}: {e}");
                payload
            }
        };

        let products: Vec<Value> = self
            .products
            .iter()
            .map(|p| {
                ValueMap::new()
                    .with("id", p.id.clone())
                    .with("name", p.name.clone())
                    .with("price", p.price)
                    .into()
            })
            .collect();
        let payload = ValueMap::new()
            .with("data_dir", self.data_dir.to_string_lossy().into_owned())
            .with("products", products);
        let payload = call(EP_READ, payload);
        let mut payload = call(EP_COMPUTE, payload);

        let columns: Vec<Value> = ["id", "name", "price"]
            .into_iter()
            .map(Value::from)
            .collect();
        let rows: Vec<Value> = self
            .products
            .iter()
            .map(|p| {
                ValueMap::new()
                    .with("id", p.id.clone())
                    .with("name", p.name.clone())
                    .with("price", format_amount(p.price))
                    .into()
            })
            .collect();
        payload.insert("columns", columns);
        payload.insert("rows", rows);
        let payload = call(EP_RENDER, payload);
        table_from_payload(&payload)
    }
}

/// Two decimals, or three when the third one is significant.
pub fn format_amount(value: f64) -> String {
    let three = format!("{value:.3}");
    match three.strip_suffix('0') {
        Some(two) => two.to_owned(),
        None => three,
    }
}

fn cell_text(v: Option<&Value>) -> String {
    match v {
        Some(Value::Text(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    }
}

fn table_from_payload(payload: &ValueMap) -> String {
    let columns: Vec<String> = payload
        .get("columns")
        .and_then(Value::as_list)
        .unwrap_or_default()
        .iter()
        .map(|c| cell_text(Some(c)))
        .collect();
    let rows: Vec<Vec<String>> = payload
        .get("rows")
        .and_then(Value::as_list)
        .unwrap_or_default()
        .iter()
        .map(|row| {
            let row = row.as_map();
            columns
                .iter()
                .map(|c| cell_text(row.and_then(|r| r.get(c))))
                .collect()
        })
        .collect();
    render_table(&columns, &rows)
}

/// Left-aligned columns separated by two spaces, with a dashed rule under
/// the header. Trailing spaces are trimmed.
pub fn render_table(columns: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..columns.len())
        .map(|i| {
            rows.iter()
                .map(|r| r.get(i).map_or(0, |c| c.chars().count()))
                .chain([columns[i].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, w) in widths.iter().enumerate() {
            let cell = cells.get(i).map_or("", String::as_str);
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(cell);
            s.extend(std::iter::repeat_n(' ', w - cell.chars().count()));
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = line(columns);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(&rule));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}
