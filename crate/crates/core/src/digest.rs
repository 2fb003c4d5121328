use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a value's compact JSON serialization.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializing plain data cannot fail");
    hex::encode(Sha256::digest(&bytes))
}
