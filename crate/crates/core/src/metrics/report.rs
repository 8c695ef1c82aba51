use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ImageScores;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    Green,
    Blue,
    HazeLike,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Green, Subset::Blue, Subset::HazeLike];

    pub fn label(&self) -> &'static str {
        match self {
            Subset::Green => "green",
            Subset::Blue => "blue",
            Subset::HazeLike => "haze-like",
        }
    }

    pub fn parse(s: &str) -> Option<Subset> {
        Subset::ALL.into_iter().find(|v| v.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredImage {
    pub name: String,
    pub subset: Subset,
    pub scores: ImageScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetAggregate {
    pub subset: Subset,
    pub count: usize,
    /// `None` when the subset has no scored images.
    pub mean: Option<ImageScores>,
}

/// Per-image scores plus per-subset and overall means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub images: Vec<ScoredImage>,
    /// Files that could not be scored, with the reason.
    pub errors: Vec<(String, String)>,
    pub subsets: Vec<SubsetAggregate>,
    pub total: Option<ImageScores>,
}

fn mean_of<'a>(items: impl Iterator<Item = &'a ImageScores>) -> Option<ImageScores> {
    let mut acc = [0.0; 5];
    let mut n = 0usize;
    for s in items {
        for (a, v) in acc.iter_mut().zip(s.values()) {
            *a += v;
        }
        n += 1;
    }
    (n > 0).then(|| ImageScores::from_values(acc.map(|a| a / n as f64)))
}

impl MetricReport {
    /// Sorts images by name and averages. The total is the mean over all
    /// images, not the mean of subset means.
    pub fn aggregate(method: &str, mut images: Vec<ScoredImage>, mut errors: Vec<(String, String)>) -> Self {
        images.sort_by(|a, b| a.name.cmp(&b.name));
        errors.sort();
        let subsets = Subset::ALL
            .iter()
            .map(|&subset| {
                let members: Vec<_> = images.iter().filter(|i| i.subset == subset).collect();
                SubsetAggregate {
                    subset,
                    count: members.len(),
                    mean: mean_of(members.iter().map(|i| &i.scores)),
                }
            })
            .collect();
        let total = mean_of(images.iter().map(|i| &i.scores));
        Self {
            method: method.to_string(),
            images,
            errors,
            subsets,
            total,
        }
    }

    /// Subsets without any scored image.
    pub fn missing_subsets(&self) -> Vec<Subset> {
        self.subsets.iter().filter(|s| s.mean.is_none()).map(|s| s.subset).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema=1\nmethod,file,subset,uciqe,uiqm,uicm,uism,uiconm\n");
        let row = |out: &mut String, file: &str, subset: &str, s: &ImageScores| {
            let v = s.values();
            let _ = writeln!(
                out,
                "{},{file},{subset},{:.6},{:.6},{:.6},{:.6},{:.6}",
                self.method, v[0], v[1], v[2], v[3], v[4]
            );
        };
        for img in &self.images {
            row(&mut out, &img.name, img.subset.label(), &img.scores);
        }
        for agg in &self.subsets {
            match &agg.mean {
                Some(m) => row(&mut out, &format!("mean({})", agg.count), agg.subset.label(), m),
                None => {
                    let _ = writeln!(out, "{},mean(0),{},,,,,", self.method, agg.subset.label());
                }
            }
        }
        if let Some(t) = &self.total {
            row(&mut out, &format!("mean({})", self.images.len()), "all", t);
        }
        for (file, err) in &self.errors {
            let _ = writeln!(out, "{},{file},error,{},,,,", self.method, err.replace(',', ";"));
        }
        out
    }

    /// Metric rows against subset and overall columns.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} | green | blue | haze-like | all |\n|---|---|---|---|---|\n", self.method);
        for (i, name) in ImageScores::NAMES.iter().enumerate() {
            let cell = |m: &Option<ImageScores>| m.map(|s| format!("{:.4}", s.values()[i])).unwrap_or_else(|| "n/a".into());
            let cols: Vec<String> = self.subsets.iter().map(|a| cell(&a.mean)).collect();
            let _ = writeln!(out, "| {name} | {} | {} |", cols.join(" | "), cell(&self.total));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(name: &str, subset: Subset, v: f64) -> ScoredImage {
        ScoredImage {
            name: name.into(),
            subset,
            scores: ImageScores::from_values([v; 5]),
        }
    }

    #[test]
    fn total_weights_images_not_subsets() {
        let r = MetricReport::aggregate(
            "raw",
            vec![img("a", Subset::Green, 1.0), img("b", Subset::Green, 2.0), img("c", Subset::Blue, 6.0)],
            vec![],
        );
        assert_eq!(r.total.unwrap().uciqe, 3.0);
        assert_eq!(r.subsets[1].mean.unwrap().uciqe, 6.0);
        assert_eq!(r.missing_subsets(), vec![Subset::HazeLike]);
        assert!(r.to_csv().starts_with("# schema=1\n"));
        assert!(r.to_markdown().contains("n/a"));
    }
}
