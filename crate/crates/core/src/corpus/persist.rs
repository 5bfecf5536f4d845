//! Versioned JSON persistence for annotation sessions.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::active::SessionState;
use crate::error::{Error, Result};

pub const SESSION_VERSION: u64 = 1;
const FORMAT_TAG: &str = "annoloop-session";

#[derive(Serialize)]
struct Envelope<'a> {
    format: &'static str,
    version: u64,
    session: &'a SessionState,
}

/// Writes the session next to its destination and renames it into place,
/// so a crash never leaves a truncated file behind.
pub fn save_session(state: &SessionState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let envelope = Envelope {
        format: FORMAT_TAG,
        version: SESSION_VERSION,
        session: state,
    };
    let bytes = serde_json::to_vec_pretty(&envelope)?;
    let tmp = path.with_extension("json.tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_session(path: impl AsRef<Path>) -> Result<SessionState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut doc: Value =
        serde_json::from_slice(&bytes).map_err(|e| Error::CorruptSession(e.to_string()))?;
    let version = doc
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::CorruptSession("missing `version` field".into()))?;
    if version != SESSION_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: SESSION_VERSION,
        });
    }
    let session = doc
        .get_mut("session")
        .map(Value::take)
        .ok_or_else(|| Error::CorruptSession("missing `session` field".into()))?;
    let state: SessionState =
        serde_json::from_value(session).map_err(|e| Error::CorruptSession(e.to_string()))?;
    state.validate()?;
    Ok(state)
}
