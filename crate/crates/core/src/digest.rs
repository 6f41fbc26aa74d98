use sha2::{Digest, Sha256};

/// SHA-256 over length-prefixed fields, rendered as 64 lowercase hex chars.
///
/// Length prefixes keep `("ab", "c")` and `("a", "bc")` distinct.
pub(crate) struct Digester(Sha256);

impl Digester {
    pub fn new(domain: &str) -> Self {
        let mut d = Digester(Sha256::new());
        d.field(domain);
        d
    }

    pub fn field(&mut self, value: &str) -> &mut Self {
        self.bytes(value.as_bytes())
    }

    pub fn bytes(&mut self, value: &[u8]) -> &mut Self {
        self.0.update((value.len() as u64).to_le_bytes());
        self.0.update(value);
        self
    }

    pub fn finish(&mut self) -> String {
        hex::encode(self.finish_bytes())
    }

    pub fn finish_bytes(&mut self) -> [u8; 32] {
        std::mem::take(&mut self.0).finalize().into()
    }
}

pub(crate) fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}
