//! Flattened mirror-map checkpoints (`v, w, b, a, c`, 380 reals, JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::divergence::{NeuralMirrorParams, PARAM_COUNT};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    schema_version: u32,
    param_count: usize,
    params: Vec<f64>,
}

pub fn to_string(params: &NeuralMirrorParams) -> String {
    let file = CheckpointFile { schema_version: 1, param_count: PARAM_COUNT, params: params.flatten() };
    serde_json::to_string(&file).expect("finite floats serialize")
}

pub fn from_str(text: &str) -> Result<NeuralMirrorParams> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("checkpoint: {e}")))?;
    if file.schema_version != 1 || file.param_count != PARAM_COUNT {
        return Err(Error::InvalidConfig(format!(
            "checkpoint: unsupported schema {} / param count {}",
            file.schema_version, file.param_count
        )));
    }
    NeuralMirrorParams::from_flat(&file.params)
}

pub fn save(path: &Path, params: &NeuralMirrorParams) -> Result<()> {
    std::fs::write(path, to_string(params) + "\n").map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<NeuralMirrorParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_bit_exactly(flat in prop::collection::vec(-1e6f64..1e6, PARAM_COUNT)) {
            let p = NeuralMirrorParams::from_flat(&flat).unwrap();
            let back = from_str(&to_string(&p)).unwrap();
            prop_assert_eq!(back.flatten(), flat);
        }
    }

    #[test]
    fn wrong_count_rejected() {
        assert!(from_str(r#"{"schema_version":1,"param_count":380,"params":[1.0]}"#).is_err());
    }
}
