//! Person cache that gives body, face and head detections stable IDs.
//!
//! Each frame is processed in three passes. Bodies match cached bodies on
//! box overlap plus appearance. Faces match cached faces on appearance and
//! then impose their ID on the body that contains them. Heads take the ID of
//! the face inside them, else of the body around them. Eyes ride along with
//! the face that contains them so downstream temperature reads can find
//! them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{iou, similarity, AppearanceVector, BBox};
use crate::simkit::{Detection, DetectionKind};

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("threshold {name} = {value} must lie in (0, 1]")]
    Threshold { name: &'static str, value: f64 },
    #[error("ttl must be positive, got {0}")]
    Ttl(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub iou_threshold: f64,
    pub body_similarity_threshold: f64,
    pub face_match_threshold: f64,
    /// Seconds an entry survives without being seen.
    pub ttl: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.3, body_similarity_threshold: 0.7, face_match_threshold: 0.8, ttl: 10.0 }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), TrackError> {
        for (name, value) in [
            ("iou_threshold", self.iou_threshold),
            ("body_similarity_threshold", self.body_similarity_threshold),
            ("face_match_threshold", self.face_match_threshold),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(TrackError::Threshold { name, value });
            }
        }
        if !(self.ttl > 0.0) || !self.ttl.is_finite() {
            return Err(TrackError::Ttl(self.ttl));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedPerson {
    pub id: u64,
    pub body_box: Option<BBox>,
    pub face_box: Option<BBox>,
    pub head_box: Option<BBox>,
    pub body_appearance: Option<AppearanceVector>,
    pub face_appearance: Option<AppearanceVector>,
    pub last_seen: f64,
}

impl TrackedPerson {
    fn new(id: u64, now: f64) -> Self {
        Self {
            id,
            body_box: None,
            face_box: None,
            head_box: None,
            body_appearance: None,
            face_appearance: None,
            last_seen: now,
        }
    }
}

/// Tracked people keyed by ID, plus the monotone counter new IDs come from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersonCache {
    people: BTreeMap<u64, TrackedPerson>,
    next_id: u64,
}

impl PersonCache {
    pub fn new() -> Self {
        Self { people: BTreeMap::new(), next_id: 1 }
    }

    pub fn len(&self) -> usize {
        self.people.len()
    }

    pub fn is_empty(&self) -> bool {
        self.people.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&TrackedPerson> {
        self.people.get(&id)
    }

    /// Entries in ascending ID order.
    pub fn iter(&self) -> impl Iterator<Item = &TrackedPerson> {
        self.people.values()
    }

    pub fn insert(&mut self, person: TrackedPerson) {
        self.next_id = self.next_id.max(person.id + 1);
        self.people.insert(person.id, person);
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id.max(1);
        self.next_id = id + 1;
        id
    }
}

/// Greedy one-to-one assignment over scored (detection, cached id) pairs:
/// highest score first, ties to the lowest ID, then the lowest detection.
fn greedy(mut cands: Vec<(f64, u64, usize)>) -> BTreeMap<usize, u64> {
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut by_det = BTreeMap::new();
    let mut taken = BTreeSet::new();
    for (_, id, det) in cands {
        if by_det.contains_key(&det) || taken.contains(&id) {
            continue;
        }
        by_det.insert(det, id);
        taken.insert(id);
    }
    by_det
}

/// The smallest candidate box containing `inner`'s centre; ties go to the
/// earlier detection.
fn container(inner: &BBox, candidates: &[usize], dets: &[Detection]) -> Option<usize> {
    let c = inner.center();
    candidates
        .iter()
        .copied()
        .filter(|&i| dets[i].bbox.contains(c))
        .min_by(|&a, &b| dets[a].bbox.area().total_cmp(&dets[b].bbox.area()).then(a.cmp(&b)))
}

fn sim(a: &AppearanceVector, b: &AppearanceVector) -> Option<f64> {
    similarity(a, b).ok()
}

/// Assigns an ID to each detection of one frame and refreshes the cache.
/// The result is aligned with `detections`; an eye outside every face and
/// head gets `None`.
pub fn assign_ids(
    detections: &[Detection],
    cache: &mut PersonCache,
    cfg: &TrackConfig,
    now: f64,
) -> Vec<Option<u64>> {
    let of_kind = |k: DetectionKind| -> Vec<usize> {
        detections.iter().enumerate().filter(|(_, d)| d.kind == k).map(|(i, _)| i).collect()
    };
    let bodies = of_kind(DetectionKind::Body);
    let faces = of_kind(DetectionKind::Face);
    let heads = of_kind(DetectionKind::Head);
    let eyes = of_kind(DetectionKind::Eye);
    let mut ids: Vec<Option<u64>> = vec![None; detections.len()];

    // Bodies.
    let mut cands = Vec::new();
    for &i in &bodies {
        let d = &detections[i];
        for p in cache.iter() {
            let (Some(bb), Some(app)) = (&p.body_box, &p.body_appearance) else { continue };
            let overlap = iou(&d.bbox, bb);
            let Some(s) = sim(&d.appearance, app) else { continue };
            if overlap >= cfg.iou_threshold && s >= cfg.body_similarity_threshold {
                cands.push((overlap + s, p.id, i));
            }
        }
    }
    let matched = greedy(cands);
    for &i in &bodies {
        ids[i] = Some(match matched.get(&i) {
            Some(&id) => id,
            None => cache.fresh_id(),
        });
    }

    // Faces.
    let mut cands = Vec::new();
    for &i in &faces {
        for p in cache.iter() {
            let Some(app) = &p.face_appearance else { continue };
            if let Some(s) = sim(&detections[i].appearance, app) {
                if s >= cfg.face_match_threshold {
                    cands.push((s, p.id, i));
                }
            }
        }
    }
    let matched = greedy(cands);
    let mut face_claimed: BTreeSet<u64> = matched.values().copied().collect();
    for &i in &faces {
        let body = container(&detections[i].bbox, &bodies, detections);
        let id = match (matched.get(&i), body) {
            (Some(&id), _) => id,
            (None, Some(b)) if !face_claimed.contains(&ids[b].expect("bodies assigned")) => {
                ids[b].expect("bodies assigned")
            }
            _ => cache.fresh_id(),
        };
        face_claimed.insert(id);
        ids[i] = Some(id);
        if let Some(b) = body {
            ids[b] = Some(id);
        }
        // Another body holding this ID was matched to someone else's track.
        for &other in &bodies {
            if Some(other) != body && ids[other] == Some(id) {
                ids[other] = Some(cache.fresh_id());
            }
        }
    }

    // Heads.
    let mut head_claimed = BTreeSet::new();
    for &i in &heads {
        let h = &detections[i].bbox;
        let from_face = faces.iter().copied().filter(|&f| h.contains(detections[f].bbox.center())).min();
        let from_body = container(h, &bodies, detections);
        let id = from_face
            .or(from_body)
            .and_then(|j| ids[j])
            .filter(|id| !head_claimed.contains(id))
            .unwrap_or_else(|| cache.fresh_id());
        head_claimed.insert(id);
        ids[i] = Some(id);
    }

    // Eyes follow their face, else their head.
    for &i in &eyes {
        let e = &detections[i].bbox;
        ids[i] = container(e, &faces, detections).or_else(|| container(e, &heads, detections)).and_then(|j| ids[j]);
    }

    for (i, d) in detections.iter().enumerate() {
        let Some(id) = ids[i] else { continue };
        if d.kind == DetectionKind::Eye {
            continue;
        }
        let entry = cache.people.entry(id).or_insert_with(|| TrackedPerson::new(id, now));
        entry.last_seen = entry.last_seen.max(now);
        match d.kind {
            DetectionKind::Body => {
                entry.body_box = Some(d.bbox);
                entry.body_appearance = Some(d.appearance.clone());
            }
            DetectionKind::Face => {
                entry.face_box = Some(d.bbox);
                entry.face_appearance = Some(d.appearance.clone());
            }
            DetectionKind::Head => entry.head_box = Some(d.bbox),
            DetectionKind::Eye => {}
        }
    }
    ids
}

/// Drops entries unseen for longer than `ttl`; returns their IDs ascending.
pub fn expire_stale(cache: &mut PersonCache, now: f64, ttl: f64) -> Vec<u64> {
    let stale: Vec<u64> = cache.people.values().filter(|p| now - p.last_seen > ttl).map(|p| p.id).collect();
    for id in &stale {
        cache.people.remove(id);
    }
    stale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DEFAULT_APPEARANCE_DIM;

    fn basis(k: usize) -> AppearanceVector {
        let mut v = vec![0.0; DEFAULT_APPEARANCE_DIM];
        v[k] = 1.0;
        AppearanceVector::new(v).unwrap()
    }

    fn blend(a: usize, b: usize, wa: f64) -> AppearanceVector {
        let mut v = vec![0.0; DEFAULT_APPEARANCE_DIM];
        v[a] = wa;
        v[b] = (1.0 - wa * wa).sqrt();
        AppearanceVector::new(v).unwrap()
    }

    fn det(kind: DetectionKind, b: (f64, f64, f64, f64), app: AppearanceVector) -> Detection {
        Detection {
            frame_seq: 0,
            kind,
            bbox: BBox::new(b.0, b.1, b.2, b.3).unwrap(),
            confidence: 0.9,
            appearance: app,
            truth_id: None,
        }
    }

    fn cached(id: u64, body: Option<(f64, f64, f64, f64)>, face: Option<AppearanceVector>, app: usize) -> TrackedPerson {
        TrackedPerson {
            id,
            body_box: body.map(|b| BBox::new(b.0, b.1, b.2, b.3).unwrap()),
            face_box: None,
            head_box: None,
            body_appearance: body.map(|_| basis(app)),
            face_appearance: face,
            last_seen: 0.0,
        }
    }

    #[test]
    fn body_clearing_both_thresholds_keeps_id() {
        let mut cache = PersonCache::new();
        cache.insert(cached(1, Some((100.0, 100.0, 100.0, 300.0)), None, 0));
        // IoU 0.9 against the cached box, similarity 0.95.
        let shifted = 100.0 * (1.0 - 0.9) / (1.0 + 0.9);
        let d = det(DetectionKind::Body, (100.0 + shifted, 100.0, 100.0, 300.0), blend(0, 1, 0.95));
        let cfg = TrackConfig::default();
        let ids = assign_ids(&[d], &mut cache, &cfg, 0.125);
        assert_eq!(ids, vec![Some(1)]);
        assert_eq!(cache.get(1).unwrap().last_seen, 0.125);
    }

    #[test]
    fn low_similarity_or_overlap_gets_new_id() {
        let cfg = TrackConfig::default();
        let mut cache = PersonCache::new();
        cache.insert(cached(1, Some((100.0, 100.0, 100.0, 300.0)), None, 0));
        let unlike = det(DetectionKind::Body, (100.0, 100.0, 100.0, 300.0), blend(0, 1, 0.5));
        assert_eq!(assign_ids(&[unlike], &mut cache, &cfg, 0.1), vec![Some(2)]);
        let far = det(DetectionKind::Body, (600.0, 100.0, 100.0, 300.0), basis(0));
        assert_eq!(assign_ids(&[far], &mut cache, &cfg, 0.2), vec![Some(3)]);
    }

    #[test]
    fn face_match_overrides_containing_body() {
        let cfg = TrackConfig::default();
        let mut cache = PersonCache::new();
        cache.insert(cached(3, None, Some(basis(5)), 5));
        cache.insert(cached(7, Some((100.0, 100.0, 100.0, 300.0)), None, 0));
        let body = det(DetectionKind::Body, (100.0, 100.0, 100.0, 300.0), basis(0));
        let face = det(DetectionKind::Face, (130.0, 110.0, 40.0, 50.0), blend(5, 6, 0.9));
        let ids = assign_ids(&[body, face], &mut cache, &cfg, 1.0);
        assert_eq!(ids, vec![Some(3), Some(3)]);
        assert!(cache.get(3).unwrap().body_box.is_some());
    }

    #[test]
    fn face_without_match_inherits_body_and_head_follows_face() {
        let cfg = TrackConfig::default();
        let mut cache = PersonCache::new();
        let body = det(DetectionKind::Body, (100.0, 100.0, 100.0, 300.0), basis(0));
        let head = det(DetectionKind::Head, (120.0, 90.0, 60.0, 70.0), basis(0));
        let face = det(DetectionKind::Face, (130.0, 100.0, 40.0, 50.0), basis(0));
        let eye = det(DetectionKind::Eye, (135.0, 110.0, 30.0, 10.0), basis(0));
        let ids = assign_ids(&[body, head, face, eye], &mut cache, &cfg, 0.0);
        assert_eq!(ids, vec![Some(1); 4]);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn lone_head_gets_fresh_id_and_no_appearance() {
        let cfg = TrackConfig::default();
        let mut cache = PersonCache::new();
        cache.insert(cached(4, None, None, 0));
        let head = det(DetectionKind::Head, (500.0, 50.0, 60.0, 70.0), basis(2));
        assert_eq!(assign_ids(&[head], &mut cache, &cfg, 0.0), vec![Some(5)]);
        let p = cache.get(5).unwrap();
        assert!(p.head_box.is_some() && p.body_appearance.is_none() && p.face_appearance.is_none());
    }

    #[test]
    fn displaced_body_does_not_collide() {
        let cfg = TrackConfig::default();
        let mut cache = PersonCache::new();
        // Cached person 1 has both a body and a face; another body now
        // overlaps the old body box, while person 1's face sits in a new body.
        cache.insert(TrackedPerson {
            face_appearance: Some(basis(1)),
            ..cached(1, Some((100.0, 100.0, 100.0, 300.0)), None, 1)
        });
        let imposter = det(DetectionKind::Body, (105.0, 100.0, 100.0, 300.0), blend(1, 2, 0.8));
        let body = det(DetectionKind::Body, (400.0, 100.0, 100.0, 300.0), basis(9));
        let face = det(DetectionKind::Face, (430.0, 110.0, 40.0, 50.0), basis(1));
        let ids = assign_ids(&[imposter, body, face], &mut cache, &cfg, 1.0);
        assert_eq!(ids[1], Some(1));
        assert_eq!(ids[2], Some(1));
        assert_ne!(ids[0], Some(1));
    }

    #[test]
    fn ties_break_to_lowest_id() {
        let cfg = TrackConfig::default();
        let mut cache = PersonCache::new();
        cache.insert(cached(2, Some((100.0, 100.0, 100.0, 300.0)), None, 0));
        cache.insert(cached(1, Some((100.0, 100.0, 100.0, 300.0)), None, 0));
        let d = det(DetectionKind::Body, (100.0, 100.0, 100.0, 300.0), basis(0));
        assert_eq!(assign_ids(&[d], &mut cache, &cfg, 1.0), vec![Some(1)]);
    }

    #[test]
    fn expiry_follows_ttl() {
        let mut cache = PersonCache::new();
        assert!(expire_stale(&mut cache, 100.0, 10.0).is_empty());
        cache.insert(TrackedPerson { last_seen: 0.0, ..cached(2, None, None, 0) });
        cache.insert(TrackedPerson { last_seen: 2.0, ..cached(1, None, None, 0) });
        cache.insert(TrackedPerson { last_seen: 0.5, ..cached(3, None, None, 0) });
        // 11 s and 10.5 s stale versus 9 s.
        assert_eq!(expire_stale(&mut cache, 11.0, 10.0), vec![2, 3]);
        assert_eq!(cache.len(), 1);
        assert!(cache.get(1).is_some());
    }

    #[test]
    fn config_validation() {
        assert!(TrackConfig::default().validate().is_ok());
        assert!(TrackConfig { iou_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrackConfig { face_match_threshold: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrackConfig { ttl: 0.0, ..Default::default() }.validate().is_err());
    }
}
