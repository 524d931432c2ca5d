//! Client for the `/encode` batch protocol.
//!
//! Request: `{"texts": [{"id": .., "text": ..}]}`.
//! Response: `{"dim": D, "vectors": [{"id": .., "vec": [..]}]}`.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::par::{self, Execution};
use crate::{Error, Result};

use super::{Embedding, EmbeddingStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub texts: Vec<TextItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedVector {
    pub id: String,
    pub vec: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub dim: usize,
    pub vectors: Vec<EncodedVector>,
}

/// Vectors that came back, plus ids the endpoint did not return.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEncoded {
    pub store: EmbeddingStore,
    pub missing: Vec<String>,
}

fn classify(endpoint: &str, err: ureq::Error) -> Error {
    match err {
        ureq::Error::StatusCode(code) if code >= 500 => Error::Connection {
            endpoint: endpoint.to_string(),
            message: format!("HTTP {code}"),
        },
        ureq::Error::StatusCode(code) => Error::Protocol(format!("HTTP {code} from {endpoint}")),
        ureq::Error::Io(_)
        | ureq::Error::Timeout(_)
        | ureq::Error::HostNotFound
        | ureq::Error::ConnectionFailed => Error::Connection {
            endpoint: endpoint.to_string(),
            message: err.to_string(),
        },
        other => Error::Protocol(other.to_string()),
    }
}

fn post(agent: &ureq::Agent, url: &str, request: &EncodeRequest) -> Result<EncodeResponse> {
    let mut response = agent.post(url).send_json(request).map_err(|e| classify(url, e))?;
    response
        .body_mut()
        .read_json::<EncodeResponse>()
        .map_err(|e| match e {
            ureq::Error::Io(_) | ureq::Error::Timeout(_) => classify(url, e),
            other => Error::Protocol(format!("malformed response: {other}")),
        })
}

/// Encode `items` through the `/encode` endpoint at `endpoint`.
///
/// Batches of size `batch` may be sent concurrently under
/// [`Execution::Parallel`]; the store is always assembled in input order.
/// Connection failures are retriable ([`Error::is_retriable`]); a vector of
/// the wrong length or a dimension change between batches is fatal.
pub fn remote_encode(
    items: &[(String, String)],
    endpoint: &str,
    batch: usize,
    exec: Execution,
) -> Result<RemoteEncoded> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    let url = format!("{}/encode", endpoint.trim_end_matches('/'));
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(300)))
        .build()
        .into();

    let requests: Vec<EncodeRequest> = if items.is_empty() {
        vec![EncodeRequest { texts: Vec::new() }]
    } else {
        items
            .chunks(batch)
            .map(|chunk| EncodeRequest {
                texts: chunk
                    .iter()
                    .map(|(id, text)| TextItem {
                        id: id.clone(),
                        text: text.clone(),
                    })
                    .collect(),
            })
            .collect()
    };
    let responses = par::map(exec, &requests, |req| post(&agent, &url, req));

    let mut dim = None;
    let mut store: Option<EmbeddingStore> = None;
    let mut missing = Vec::new();
    for (request, response) in requests.iter().zip(responses) {
        let response = response?;
        match dim {
            None => dim = Some(response.dim),
            Some(d) if d != response.dim => {
                return Err(Error::Dimension {
                    id: None,
                    expected: d,
                    found: response.dim,
                })
            }
            Some(_) => {}
        }
        let store = match &mut store {
            Some(s) => s,
            None => store.insert(EmbeddingStore::new(response.dim, format!("remote:{endpoint}"))?),
        };
        let mut returned: HashMap<String, Vec<f64>> = HashMap::with_capacity(response.vectors.len());
        for v in response.vectors {
            if v.vec.len() != response.dim {
                return Err(Error::Dimension {
                    id: Some(v.id),
                    expected: response.dim,
                    found: v.vec.len(),
                });
            }
            returned.insert(v.id, v.vec);
        }
        for item in &request.texts {
            match returned.remove(&item.id) {
                Some(values) => {
                    let e = Embedding::new(values).map_err(|_| Error::NonFinite(format!("vector `{}`", item.id)))?;
                    store.insert(item.id.clone(), e)?;
                }
                None => missing.push(item.id.clone()),
            }
        }
        if let Some(extra) = returned.keys().next() {
            return Err(Error::Protocol(format!("response contains unrequested id `{extra}`")));
        }
    }
    let store = store.ok_or_else(|| Error::Protocol("no response".into()))?;
    if !missing.is_empty() {
        log::warn!("{} ids missing from encoder response", missing.len());
    }
    Ok(RemoteEncoded { store, missing })
}
