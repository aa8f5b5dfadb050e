use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

/// Where a server listens: `tcp:HOST:PORT` or `unix:PATH`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Unix(PathBuf),
}

#[derive(Debug, Error)]
#[error("endpoint must be tcp:HOST:PORT or unix:PATH, got {0:?}")]
pub struct EndpointParseError(String);

impl FromStr for Endpoint {
    type Err = EndpointParseError;

    fn from_str(s: &str) -> Result<Endpoint, EndpointParseError> {
        match s.split_once(':') {
            Some(("tcp", addr)) if addr.contains(':') => Ok(Endpoint::Tcp(addr.to_string())),
            Some(("unix", path)) if !path.is_empty() => Ok(Endpoint::Unix(PathBuf::from(path))),
            _ => Err(EndpointParseError(s.to_string())),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp:{addr}"),
            Endpoint::Unix(path) => write!(f, "unix:{}", path.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        assert_eq!("tcp:127.0.0.1:9180".parse::<Endpoint>().unwrap(), Endpoint::Tcp("127.0.0.1:9180".into()));
        assert_eq!(
            "unix:/tmp/tagcache.sock".parse::<Endpoint>().unwrap(),
            Endpoint::Unix("/tmp/tagcache.sock".into())
        );
        for bad in ["", "tcp:9180", "unix:", "udp:1.2.3.4:5"] {
            assert!(bad.parse::<Endpoint>().is_err(), "{bad}");
        }
        let e: Endpoint = "unix:/x/y".parse().unwrap();
        assert_eq!(e.to_string().parse::<Endpoint>().unwrap(), e);
    }
}
