//! Unit-tagged numbers. A quantity is written either as
//! `{"value": 2.37, "unit": "2pi_kHz"}` or as `{"2pi_kHz": 2.37}`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
    Angle,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Frequency => "frequency",
            Dimension::Time => "time",
            Dimension::Angle => "angle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    RadPerSecond,
    TwoPiHz,
    TwoPiKhz,
    TwoPiMhz,
    /// Multiples of the configured gain rate.
    GammaG,
    Seconds,
    Millis,
    Micros,
    Nanos,
    Radians,
    /// Multiples of π.
    Pi,
    Degrees,
}

impl Unit {
    pub const ALL: [Unit; 12] = [
        Unit::RadPerSecond,
        Unit::TwoPiHz,
        Unit::TwoPiKhz,
        Unit::TwoPiMhz,
        Unit::GammaG,
        Unit::Seconds,
        Unit::Millis,
        Unit::Micros,
        Unit::Nanos,
        Unit::Radians,
        Unit::Pi,
        Unit::Degrees,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Unit::RadPerSecond => "rad/s",
            Unit::TwoPiHz => "2pi_Hz",
            Unit::TwoPiKhz => "2pi_kHz",
            Unit::TwoPiMhz => "2pi_MHz",
            Unit::GammaG => "gamma_g",
            Unit::Seconds => "s",
            Unit::Millis => "ms",
            Unit::Micros => "us",
            Unit::Nanos => "ns",
            Unit::Radians => "rad",
            Unit::Pi => "pi",
            Unit::Degrees => "deg",
        }
    }

    pub fn parse(s: &str) -> Option<Unit> {
        Unit::ALL.into_iter().find(|u| u.name() == s)
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Unit::RadPerSecond | Unit::TwoPiHz | Unit::TwoPiKhz | Unit::TwoPiMhz | Unit::GammaG => Dimension::Frequency,
            Unit::Seconds | Unit::Millis | Unit::Micros | Unit::Nanos => Dimension::Time,
            Unit::Radians | Unit::Pi | Unit::Degrees => Dimension::Angle,
        }
    }

    fn names() -> String {
        Unit::ALL.iter().map(|u| format!("`{}`", u.name())).collect::<Vec<_>>().join(", ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub const fn new(value: f64, unit: Unit) -> Self {
        Self { value, unit }
    }

    pub const fn khz(value: f64) -> Self {
        Self::new(value, Unit::TwoPiKhz)
    }

    pub const fn gamma_g(value: f64) -> Self {
        Self::new(value, Unit::GammaG)
    }

    pub const fn micros(value: f64) -> Self {
        Self::new(value, Unit::Micros)
    }

    pub const fn rad(value: f64) -> Self {
        Self::new(value, Unit::Radians)
    }

    fn expect(&self, field: &str, dim: Dimension) -> Result<(), CliError> {
        if self.unit.dimension() != dim {
            return Err(CliError::validation(
                field,
                format!("expected a {dim}, got unit `{}` ({})", self.unit.name(), self.unit.dimension()),
            ));
        }
        if !self.value.is_finite() {
            return Err(CliError::validation(field, "value must be finite"));
        }
        Ok(())
    }

    /// Angular frequency in rad/s. `gamma_g` is `None` while the rates
    /// themselves are being read, which makes that unit an error there.
    pub fn frequency(&self, field: &str, gamma_g: Option<f64>) -> Result<f64, CliError> {
        self.expect(field, Dimension::Frequency)?;
        Ok(match self.unit {
            Unit::RadPerSecond => self.value,
            Unit::TwoPiHz => TAU * self.value,
            Unit::TwoPiKhz => TAU * 1e3 * self.value,
            Unit::TwoPiMhz => TAU * 1e6 * self.value,
            Unit::GammaG => match gamma_g {
                Some(g) => g * self.value,
                None => return Err(CliError::validation(field, "unit `gamma_g` cannot be used for the rates themselves")),
            },
            _ => unreachable!("checked dimension"),
        })
    }

    pub fn time(&self, field: &str) -> Result<f64, CliError> {
        self.expect(field, Dimension::Time)?;
        Ok(match self.unit {
            Unit::Seconds => self.value,
            Unit::Millis => 1e-3 * self.value,
            Unit::Micros => 1e-6 * self.value,
            Unit::Nanos => 1e-9 * self.value,
            _ => unreachable!("checked dimension"),
        })
    }

    pub fn angle(&self, field: &str) -> Result<f64, CliError> {
        self.expect(field, Dimension::Angle)?;
        Ok(match self.unit {
            Unit::Radians => self.value,
            Unit::Pi => PI * self.value,
            Unit::Degrees => self.value.to_radians(),
            _ => unreachable!("checked dimension"),
        })
    }
}

impl Serialize for Quantity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Quantity", 2)?;
        st.serialize_field("value", &self.value)?;
        st.serialize_field("unit", self.unit.name())?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Quantity;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str(r#"a unit-tagged number such as {"value": 2.37, "unit": "2pi_kHz"} or {"2pi_kHz": 2.37}"#)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Quantity, E> {
                Err(E::custom(format!("bare number {v} has no unit; write {{\"value\": {v}, \"unit\": ...}}")))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Quantity, E> {
                self.visit_f64(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Quantity, E> {
                self.visit_f64(v as f64)
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Quantity, A::Error> {
                let (mut value, mut unit) = (None, None);
                let mut short = None;
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "value" if value.is_none() => value = Some(map.next_value::<f64>()?),
                        "unit" if unit.is_none() => {
                            let u: String = map.next_value()?;
                            unit = Some(Unit::parse(&u).ok_or_else(|| {
                                de::Error::custom(format!("unknown unit `{u}`, expected one of {}", Unit::names()))
                            })?);
                        }
                        other => match Unit::parse(other) {
                            Some(u) if short.is_none() => short = Some(Quantity::new(map.next_value()?, u)),
                            _ => {
                                return Err(de::Error::custom(format!(
                                    "unexpected key `{other}` in quantity; use `value` and `unit`, or a single unit key from {}",
                                    Unit::names()
                                )))
                            }
                        },
                    }
                }
                match (value, unit, short) {
                    (Some(v), Some(u), None) => Ok(Quantity::new(v, u)),
                    (None, None, Some(q)) => Ok(q),
                    (Some(_), None, None) => Err(de::Error::custom("quantity is missing `unit`")),
                    (None, Some(_), None) => Err(de::Error::custom("quantity is missing `value`")),
                    _ => Err(de::Error::custom("quantity must have either `value` and `unit` or one unit key")),
                }
            }
        }
        d.deserialize_any(V)
    }
}
