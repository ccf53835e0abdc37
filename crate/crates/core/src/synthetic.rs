//! Seeded synthetic corpora: a few tight informative clusters inside a broad
//! non-informative cloud, plus an other-event pool that sits near the cloud.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{BinaryLabel, Post, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub train: usize,
    pub test: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    pub informative_clusters: usize,
    pub informative_fraction: f64,
    /// Per-coordinate spread of an informative cluster.
    pub cluster_std: f64,
    /// Per-coordinate spread of the non-informative cloud.
    pub cloud_std: f64,
    /// Distance of every class centre from the origin.
    pub center_norm: f64,
    /// Cosine between each informative centre and the cloud centre.
    pub alignment: f64,
    /// Other-event posts of a different event type.
    pub pool_size: usize,
    /// Other-event posts that share the event type and must never be used.
    pub same_type_pool: usize,
    pub event: String,
    pub event_type: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train: 1000,
            test: 200,
            image_dim: 16,
            text_dim: 16,
            informative_clusters: 3,
            informative_fraction: 0.4,
            cluster_std: 0.25,
            cloud_std: 0.45,
            center_norm: 3.0,
            alignment: 0.9,
            pool_size: 1000,
            same_type_pool: 50,
            event: "synthetic-flood".into(),
            event_type: "flood".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub event_posts: Vec<Post>,
    pub pool: Vec<Post>,
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn around(rng: &mut ChaCha8Rng, center: &[f64], std: f64) -> Vec<f32> {
    let noise = Normal::new(0.0, std).expect("finite std");
    center
        .iter()
        .map(|&c| (c + noise.sample(rng)) as f32)
        .collect()
}

fn split_post(
    id: String,
    vector: Vec<f32>,
    image_dim: usize,
    event: &str,
    event_type: &str,
    split: Split,
    gold: Option<BinaryLabel>,
) -> Post {
    let text = vector[image_dim..].to_vec();
    let mut image = vector;
    image.truncate(image_dim);
    let image_ref = format!("synthetic://{id}.jpg");
    let caption = match gold {
        Some(BinaryLabel::Informative) => "damage report",
        Some(BinaryLabel::NotInformative) => "unrelated chatter",
        None => "other event",
    };
    Post::new(id, caption, image_ref, image, text, event, event_type, split, gold)
}

/// Generates an event corpus with gold labels and an augmentation pool.
pub fn generate(config: &SyntheticConfig, seed: u64) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = config.image_dim + config.text_dim;

    let cloud_dir = unit_direction(&mut rng, dim);
    let cloud_center: Vec<f64> = cloud_dir.iter().map(|x| x * config.center_norm).collect();
    let a = config.alignment.clamp(-1.0, 1.0);
    let modes: Vec<Vec<f64>> = (0..config.informative_clusters.max(1))
        .map(|_| {
            // Component of a random direction orthogonal to the cloud direction.
            let d = unit_direction(&mut rng, dim);
            let along: f64 = d.iter().zip(&cloud_dir).map(|(x, y)| x * y).sum();
            let mut ortho: Vec<f64> = d.iter().zip(&cloud_dir).map(|(x, y)| x - along * y).collect();
            let n = ortho.iter().map(|x| x * x).sum::<f64>().sqrt();
            ortho.iter_mut().for_each(|x| *x /= n);
            let b = (1.0 - a * a).sqrt();
            ortho
                .iter()
                .zip(&cloud_dir)
                .map(|(o, c)| config.center_norm * (a * c + b * o))
                .collect()
        })
        .collect();

    let mut event_posts = Vec::with_capacity(config.train + config.test);
    for (split, count) in [(Split::Train, config.train), (Split::Test, config.test)] {
        for i in 0..count {
            let informative = rng.random::<f64>() < config.informative_fraction;
            let (vector, gold) = if informative {
                let mode = &modes[rng.random_range(0..modes.len())];
                (around(&mut rng, mode, config.cluster_std), BinaryLabel::Informative)
            } else {
                (
                    around(&mut rng, &cloud_center, config.cloud_std),
                    BinaryLabel::NotInformative,
                )
            };
            let tag = if split == Split::Train { "tr" } else { "te" };
            event_posts.push(split_post(
                format!("{tag}{i:05}"),
                vector,
                config.image_dim,
                &config.event,
                &config.event_type,
                split,
                Some(gold),
            ));
        }
    }

    // Other-event posts form denser pockets inside the non-informative cloud.
    let pockets: Vec<Vec<f64>> = (0..4)
        .map(|_| around(&mut rng, &cloud_center, config.cloud_std * 0.8))
        .map(|v| v.into_iter().map(f64::from).collect())
        .collect();
    let other_types = ["earthquake", "wildfire", "hurricane"];
    let mut pool = Vec::with_capacity(config.pool_size + config.same_type_pool);
    for i in 0..config.pool_size {
        let pocket = &pockets[rng.random_range(0..pockets.len())];
        let kind = other_types[i % other_types.len()];
        pool.push(split_post(
            format!("ox{i:05}"),
            around(&mut rng, pocket, config.cloud_std * 0.5),
            config.image_dim,
            &format!("synthetic-{kind}"),
            kind,
            Split::Train,
            None,
        ));
    }
    for i in 0..config.same_type_pool {
        pool.push(split_post(
            format!("sx{i:05}"),
            around(&mut rng, &modes[0], config.cluster_std),
            config.image_dim,
            "synthetic-other-flood",
            &config.event_type,
            Split::Train,
            None,
        ));
    }

    SyntheticData { event_posts, pool }
}
