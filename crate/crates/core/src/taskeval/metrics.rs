use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity, completeness, and their weighted harmonic mean
/// `(1+β)hc / (βh + c)`. Entropies use natural logs; a zero marginal
/// entropy makes the matching score 1.
pub fn homogeneity_completeness_v(gold: &[usize], pred: &[usize], beta: f64) -> Result<(f64, f64, f64)> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Contract("V-measure of an empty labeling".into()));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::param("beta", "must be positive"));
    }
    let n = gold.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut by_class: BTreeMap<usize, usize> = BTreeMap::new();
    let mut by_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    for (&c, &k) in gold.iter().zip(pred) {
        *joint.entry((c, k)).or_default() += 1;
        *by_class.entry(c).or_default() += 1;
        *by_cluster.entry(k).or_default() += 1;
    }
    let h_c = entropy(by_class.values().copied(), n);
    let h_k = entropy(by_cluster.values().copied(), n);
    let h_joint = entropy(joint.values().copied(), n);
    // H(C|K) = H(C,K) − H(K), H(K|C) = H(C,K) − H(C).
    let h_c_given_k = (h_joint - h_k).max(0.0);
    let h_k_given_c = (h_joint - h_c).max(0.0);
    let h = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let c = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    let v = if h + c == 0.0 {
        0.0
    } else {
        (1.0 + beta) * h * c / (beta * h + c)
    };
    Ok((h, c, v.clamp(0.0, 1.0)))
}

pub fn v_measure(gold: &[usize], pred: &[usize], beta: f64) -> Result<f64> {
    Ok(homogeneity_completeness_v(gold, pred, beta)?.2)
}

/// nDCG@k with linear gain and a 1/log₂(i+1) discount. `ranked` holds the
/// relevance of each retrieved item in rank order; the ideal ranking sorts
/// `all_judged` descending. `None` when the query has no relevant mass.
pub fn ndcg_at_k(ranked: &[i64], k: usize, all_judged: &[i64]) -> Result<Option<f64>> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if let Some(r) = ranked.iter().chain(all_judged).find(|&&r| r < 0) {
        return Err(Error::Contract(format!("negative relevance {r}")));
    }
    let dcg = |rels: &mut dyn Iterator<Item = i64>| -> f64 {
        rels.take(k)
            .enumerate()
            .map(|(i, r)| r as f64 / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal = all_judged.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&mut ideal.into_iter());
    if idcg == 0.0 {
        return Ok(None);
    }
    let got = dcg(&mut ranked.iter().copied());
    Ok(Some((got / idcg).clamp(0.0, 1.0)))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "correlation of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::NonIdentifiable("correlation with a constant input".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "spearman of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "spearman needs at least 3 pairs, got {}",
            a.len()
        )));
    }
    if let Some(v) = a.iter().chain(b).find(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("non-finite value {v}")));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v_measure_examples() {
        assert_eq!(v_measure(&[0, 0, 1, 1], &[5, 5, 9, 9], 1.0).unwrap(), 1.0);
        assert!(v_measure(&[0, 0, 1, 1], &[0, 1, 0, 1], 1.0).unwrap().abs() < 1e-15);
        let (h, c, v) = homogeneity_completeness_v(&[0, 0, 1, 1], &[0, 0, 1, 2], 1.0).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
        assert!((c - 2.0 / 3.0).abs() < 1e-12);
        assert!((v - 0.8).abs() < 1e-12);
        assert!(v_measure(&[0], &[0, 1], 1.0).is_err());
    }

    #[test]
    fn v_measure_single_cluster_conventions() {
        // One class, one cluster: both entropies vanish.
        assert_eq!(v_measure(&[3, 3, 3], &[1, 1, 1], 1.0).unwrap(), 1.0);
        // Two classes in one cluster: complete but not homogeneous.
        let (h, c, v) = homogeneity_completeness_v(&[0, 1], &[0, 0], 1.0).unwrap();
        assert_eq!((h, c, v), (0.0, 1.0, 0.0));
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[1, 0, 0], 10, &[1]).unwrap(), Some(1.0));
        let r = ndcg_at_k(&[0, 0, 1], 10, &[1]).unwrap().unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        let r = ndcg_at_k(&[1, 0, 0, 1], 10, &[1, 1]).unwrap().unwrap();
        let want = (1.0 + 1.0 / 5f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert!((r - want).abs() < 1e-15);
        assert!((r - 0.87722).abs() < 1e-5);
        assert_eq!(ndcg_at_k(&[0, 0], 10, &[0, 0]).unwrap(), None);
        assert!(ndcg_at_k(&[-1], 10, &[1]).is_err());
        // Relevant item past the cutoff contributes nothing.
        let mut ranked = vec![0; 10];
        ranked.push(1);
        assert_eq!(ndcg_at_k(&ranked, 10, &[1]).unwrap(), Some(0.0));
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-15);
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::NonIdentifiable(_))
        ));
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }
}
