//! Plain-text model files.
//!
//! ```text
//! eldam-model 1
//! activation tanh
//! dims 2 16 3
//! # any number of comment lines
//! 1.2345e-1
//! ...
//! ```
//!
//! After the header comes one parameter per line in [`Network::parameters`]
//! order, written in shortest round-trip exponent form, so a load after a
//! save reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use eldam_core::{Activation, Network};

use crate::error::{Error, Result};

const MAGIC: &str = "eldam-model 1";

pub fn to_text(net: &Network, comments: &[String]) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let activation = match net.activation() {
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
    };
    let _ = writeln!(out, "activation {activation}");
    let dims: Vec<String> = net.dims().iter().map(usize::to_string).collect();
    let _ = writeln!(out, "dims {}", dims.join(" "));
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    for p in net.parameters() {
        let _ = writeln!(out, "{p:e}");
    }
    out
}

pub fn from_text(text: &str, source: &Path) -> Result<Network> {
    let fail = |line: usize, message: &str| Error::Format {
        path: source.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.starts_with('#') && !l.is_empty());

    match lines.next() {
        Some((_, MAGIC)) => {}
        Some((n, _)) => return Err(fail(n, "not an eldam model file")),
        None => return Err(fail(1, "empty model file")),
    }
    let activation = match lines.next() {
        Some((_, "activation tanh")) => Activation::Tanh,
        Some((_, "activation relu")) => Activation::Relu,
        Some((n, _)) => return Err(fail(n, "expected `activation tanh|relu`")),
        None => return Err(fail(2, "missing activation")),
    };
    let dims: Vec<usize> = match lines.next() {
        Some((n, l)) => {
            let rest = l.strip_prefix("dims ").ok_or_else(|| fail(n, "expected `dims ...`"))?;
            rest.split_whitespace()
                .map(|d| d.parse().map_err(|_| fail(n, "bad layer size")))
                .collect::<Result<_>>()?
        }
        None => return Err(fail(3, "missing dims")),
    };
    let params = lines
        .map(|(n, l)| l.parse::<f64>().map_err(|_| fail(n, "bad parameter value")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Network::from_parameters(&dims, activation, params)?)
}

pub fn save_model(net: &Network, comments: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(net, comments)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}
