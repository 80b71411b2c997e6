use std::path::Path;

use fedopt_core::fedloop::Checkpoint;

use crate::error::AppResult;
use crate::io::{read_json, write_json};

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> AppResult<()> {
    write_json(path, ck)
}

pub fn load_checkpoint(path: &Path) -> AppResult<Checkpoint> {
    read_json(path)
}
