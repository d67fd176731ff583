use std::collections::BTreeSet;

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ProductRecord {
    pub id: String,
    pub name: String,
    /// Unit price in currency units.
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SaleRecord {
    pub product_id: String,
    pub quantity: u32,
    /// `YYYY-MM-DD`.
    pub date: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("line {line}: {reason}")]
    BadRow { line: u64, reason: String },
}

fn rows<T: for<'de> Deserialize<'de>>(
    text: &str,
    header: &[&str],
) -> Result<Vec<(u64, T)>, RecordError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| RecordError::BadRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if found.iter().ne(header.iter().copied()) {
        return Err(RecordError::BadRow {
            line: 1,
            reason: format!("header must be `{}`", header.join(",")),
        });
    }
    reader
        .deserialize()
        .map(|r| {
            r.map_err(|e| RecordError::BadRow {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })
        })
        .enumerate()
        .map(|(i, r)| r.map(|row| (i as u64 + 2, row)))
        .collect()
}

/// Parses `id,name,price` rows. Ids must be unique and prices non-negative.
pub fn parse_products(text: &str) -> Result<Vec<ProductRecord>, RecordError> {
    let mut seen = BTreeSet::new();
    rows::<ProductRecord>(text, &["id", "name", "price"])?
        .into_iter()
        .map(|(line, p)| {
            let bad = |reason: String| RecordError::BadRow { line, reason };
            if p.id.is_empty() {
                return Err(bad("empty product id".into()));
            }
            if !seen.insert(p.id.clone()) {
                return Err(bad(format!("product `{}` listed twice", p.id)));
            }
            if !p.price.is_finite() || p.price < 0.0 {
                return Err(bad(format!("price of `{}` must be >= 0", p.id)));
            }
            Ok(p)
        })
        .collect()
}

/// Parses `product_id,quantity,date` rows; every sale must name a known
/// product.
pub fn parse_sales(text: &str, products: &[ProductRecord]) -> Result<Vec<SaleRecord>, RecordError> {
    rows::<SaleRecord>(text, &["product_id", "quantity", "date"])?
        .into_iter()
        .map(|(line, s)| {
            let bad = |reason: String| RecordError::BadRow { line, reason };
            if !products.iter().any(|p| p.id == s.product_id) {
                return Err(bad(format!("unknown product `{}`", s.product_id)));
            }
            if !is_iso_date(&s.date) {
                return Err(bad(format!("`{}` is not a YYYY-MM-DD date", s.date)));
            }
            Ok(s)
        })
        .collect()
}

pub fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let num = |r: std::ops::Range<usize>| -> Option<u32> {
        let part = &s[r];
        part.bytes()
            .all(|c| c.is_ascii_digit())
            .then(|| part.parse().ok())?
    };
    let (Some(year), Some(month), Some(day)) = (num(0..4), num(5..7), num(8..10)) else {
        return false;
    };
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days = match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&day)
}
