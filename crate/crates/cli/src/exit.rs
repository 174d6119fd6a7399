//! Exit codes: 0 success, 2 config error, 3 data error, 4 audit divergence,
//! 5 capacity-contract violation, 1 anything else.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Divergence,
    Capacity,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Divergence => 4,
            Kind::Capacity => 5,
        }
    }
}

/// Marks an error chain with the exit code it should produce.
#[derive(Debug)]
pub struct Tagged(pub Kind);

impl fmt::Display for Tagged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.0 {
            Kind::Config => "configuration error",
            Kind::Data => "data error",
            Kind::Divergence => "trace divergence",
            Kind::Capacity => "capacity contract violated",
        };
        f.write_str(what)
    }
}

impl std::error::Error for Tagged {}

pub fn tag<T>(r: anyhow::Result<T>, kind: Kind) -> anyhow::Result<T> {
    r.map_err(|e| e.context(Tagged(kind)))
}

pub fn code_of(err: &anyhow::Error) -> u8 {
    if let Some(t) = err.downcast_ref::<Tagged>() {
        return t.0.code();
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<oblivnet::Error>() {
            return match e {
                oblivnet::Error::CapacityViolation { .. } => Kind::Capacity.code(),
                oblivnet::Error::InvalidConfig(_) => Kind::Config.code(),
                oblivnet::Error::Parse { .. }
                | oblivnet::Error::Format { .. }
                | oblivnet::Error::OutOfRange(_)
                | oblivnet::Error::LengthMismatch { .. } => Kind::Data.code(),
                _ => 1,
            };
        }
    }
    1
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;

    #[test]
    fn codes() {
        let e = tag::<()>(Err(anyhow!("x")), Kind::Data).unwrap_err();
        assert_eq!(code_of(&e), 3);
        let e = anyhow::Error::new(oblivnet::Error::CapacityViolation { overflowed: 2 }).context("step");
        assert_eq!(code_of(&e), 5);
        assert_eq!(code_of(&anyhow!("other")), 1);
    }
}
