//! Corpus file format: one JSON document
//! `{"format":"commlevels-corpus","version":1,"participants":[..],"messages":[..]}`
//! with participants in id order, messages in corpus order and all maps
//! key-sorted, so equal corpora serialize to equal bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Corpus, CorpusError, Message, Participant};

pub const CORPUS_FORMAT: &str = "commlevels-corpus";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Serialize)]
struct CorpusFileRef<'a> {
    format: &'a str,
    version: u32,
    participants: &'a [Participant],
    messages: &'a [Message],
}

#[derive(Deserialize)]
struct CorpusFile {
    format: String,
    version: u32,
    participants: Vec<Participant>,
    messages: Vec<Message>,
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

impl Corpus {
    pub fn write_to<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let doc = CorpusFileRef {
            format: CORPUS_FORMAT,
            version: CORPUS_VERSION,
            participants: &self.participants,
            messages: &self.messages,
        };
        serde_json::to_writer(writer, &doc)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let doc: CorpusFile = serde_json::from_reader(reader)?;
        if doc.format != CORPUS_FORMAT {
            return Err(CorpusError::Format(format!("format tag `{}`", doc.format)));
        }
        if doc.version != CORPUS_VERSION {
            return Err(CorpusError::Format(format!("version {}", doc.version)));
        }
        Corpus::new(doc.participants, doc.messages)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// SHA-256 over the serialized form, hex encoded. Identifies the corpus in
    /// provenance reports.
    pub fn identity_hash(&self) -> String {
        let mut hasher = HashWriter(Sha256::new());
        self.write_to(&mut hasher).expect("hashing never fails");
        hex::encode(hasher.0.finalize())
    }
}
