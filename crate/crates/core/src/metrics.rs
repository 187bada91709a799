//! Evaluation aggregates, their CSV form, and SVG line charts.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::env::Outcome;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "step,battle_won_mean,dead_allies_mean,dead_enemies_mean,mean_innate_return,n_episodes";

/// Chart smoothing window, in evaluations.
pub const DEFAULT_SMOOTHING_WINDOW: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub battle_won_mean: f64,
    pub dead_allies_mean: f64,
    pub dead_enemies_mean: f64,
    pub mean_innate_return: f64,
    pub n_episodes: usize,
}

impl MetricsRecord {
    /// Checks the bounds for a battle of `n_allies` against `n_enemies`.
    pub fn validate(&self, n_allies: usize, n_enemies: usize) -> Result<()> {
        let within = |v: f64, hi: f64| v.is_finite() && (0.0..=hi).contains(&v);
        if self.n_episodes == 0 {
            return Err(Error::InvalidInput("metrics record covers no episodes".into()));
        }
        if !within(self.battle_won_mean, 1.0)
            || !within(self.dead_allies_mean, n_allies as f64)
            || !within(self.dead_enemies_mean, n_enemies as f64)
            || !self.mean_innate_return.is_finite()
        {
            return Err(Error::InvalidInput(format!(
                "metrics record at step {} is out of bounds",
                self.step
            )));
        }
        Ok(())
    }

    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::BattleWon => self.battle_won_mean,
            Metric::DeadAllies => self.dead_allies_mean,
            Metric::DeadEnemies => self.dead_enemies_mean,
            Metric::InnateReturn => self.mean_innate_return,
        }
    }
}

/// What one evaluation episode contributes to a [`MetricsRecord`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub outcome: Outcome,
    pub dead_allies: usize,
    pub dead_enemies: usize,
    /// Undiscounted innate return averaged over the agents.
    pub innate_return: f64,
}

/// Plain means over `episodes`. The result does not depend on their order.
pub fn aggregate(step: u64, episodes: &[EpisodeOutcome]) -> Result<MetricsRecord> {
    if episodes.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate zero episodes".into()));
    }
    let n = episodes.len() as f64;
    let won = episodes.iter().filter(|e| e.outcome == Outcome::Won).count();
    let dead_allies: usize = episodes.iter().map(|e| e.dead_allies).sum();
    let dead_enemies: usize = episodes.iter().map(|e| e.dead_enemies).sum();
    let mut returns: Vec<f64> = episodes.iter().map(|e| e.innate_return).collect();
    returns.sort_by(f64::total_cmp);
    let total_return: f64 = returns.iter().sum();
    Ok(MetricsRecord {
        step,
        battle_won_mean: won as f64 / n,
        dead_allies_mean: dead_allies as f64 / n,
        dead_enemies_mean: dead_enemies as f64 / n,
        mean_innate_return: total_return / n,
        n_episodes: episodes.len(),
    })
}

/// CSV text for `records`: fixed header, six decimals, `\n` line ends.
pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        // Writing to a String cannot fail.
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{}",
            r.step,
            r.battle_won_mean,
            r.dead_allies_mean,
            r.dead_enemies_mean,
            r.mean_innate_return,
            r.n_episodes
        );
    }
    out
}

pub fn write_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    if records.windows(2).any(|w| w[0].step > w[1].step) {
        return Err(Error::InvalidInput("metrics records are not ordered by step".into()));
    }
    fs::write(path, to_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::InvalidInput(format!("unreadable metrics header: {e}")))?;
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidInput("unexpected metrics header".into()));
    }
    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::InvalidInput(format!("metrics row {}: {e}", line + 1)))?;
        let field = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| {
                Error::InvalidInput(format!("metrics row {}: bad `{}`", line + 1, expected[i]))
            })
        };
        let int = |i: usize| -> Result<u64> {
            row[i].parse().map_err(|_| {
                Error::InvalidInput(format!("metrics row {}: bad `{}`", line + 1, expected[i]))
            })
        };
        out.push(MetricsRecord {
            step: int(0)?,
            battle_won_mean: field(1)?,
            dead_allies_mean: field(2)?,
            dead_enemies_mean: field(3)?,
            mean_innate_return: field(4)?,
            n_episodes: int(5)? as usize,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    BattleWon,
    DeadAllies,
    DeadEnemies,
    InnateReturn,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::BattleWon,
        Metric::DeadAllies,
        Metric::DeadEnemies,
        Metric::InnateReturn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::BattleWon => "battle_won_mean",
            Metric::DeadAllies => "dead_allies_mean",
            Metric::DeadEnemies => "dead_enemies_mean",
            Metric::InnateReturn => "mean_innate_return",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metric `{s}`")))
    }
}

/// Trailing mean over at most `window` points.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            sum += v;
            if i >= window {
                sum -= values[i - window];
            }
            sum / (i + 1).min(window) as f64
        })
        .collect()
}

/// One named curve of a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub records: Vec<MetricsRecord>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG line chart of `metric` with one polyline per series. `smoothing`
/// applies a trailing moving average at render time only.
pub fn render_chart_svg(
    title: &str,
    series: &[Series],
    metric: Metric,
    smoothing: Option<usize>,
) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidInput("chart needs at least one series".into()));
    }
    let curves: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            let raw: Vec<f64> = s.records.iter().map(|r| r.metric(metric)).collect();
            let ys = match smoothing {
                Some(w) => moving_average(&raw, w),
                None => raw,
            };
            s.records.iter().map(|r| r.step as f64).zip(ys).collect()
        })
        .collect();
    let points = curves.iter().flatten();
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if x_lo > x_hi {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_hi == x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi == y_lo {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT:.2},{TOP:.2} L{LEFT:.2},{:.2} L{:.2},{:.2}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    for (value, y) in [(y_lo, TOP + plot_h), (y_hi, TOP)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{value:.3}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (value, x) in [(x_lo, LEFT), (x_hi, LEFT + plot_w)] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{value:.0}</text>"#,
            TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">environment steps</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        metric.name()
    );
    for (k, (s, curve)) in series.iter().zip(&curves).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = curve
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_chart(
    title: &str,
    series: &[Series],
    metric: Metric,
    smoothing: Option<usize>,
    path: &Path,
) -> Result<()> {
    let svg = render_chart_svg(title, series, metric, smoothing)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn episode(outcome: Outcome, dead_allies: usize, dead_enemies: usize, ret: f64) -> EpisodeOutcome {
        EpisodeOutcome {
            outcome,
            dead_allies,
            dead_enemies,
            innate_return: ret,
        }
    }

    fn record(step: u64, won: f64) -> MetricsRecord {
        MetricsRecord {
            step,
            battle_won_mean: won,
            dead_allies_mean: 1.25,
            dead_enemies_mean: 4.5,
            mean_innate_return: -3.2071234567,
            n_episodes: 8,
        }
    }

    #[test]
    fn aggregate_examples() {
        use Outcome::*;
        let eps: Vec<_> = [Won, Won, Lost, Won, Lost]
            .iter()
            .map(|&o| episode(o, 0, 0, 0.0))
            .collect();
        assert_eq!(aggregate(0, &eps).unwrap().battle_won_mean, 0.6);

        let eps = [episode(Lost, 2, 0, 0.0), episode(Lost, 3, 0, 0.0), episode(Lost, 1, 0, 0.0)];
        assert_eq!(aggregate(0, &eps).unwrap().dead_allies_mean, 2.0);

        let eps = [episode(Won, 0, 5, 1.0), episode(Won, 0, 5, 2.0), episode(Draw, 0, 5, 3.0)];
        let r = aggregate(10, &eps).unwrap();
        assert_eq!(r.battle_won_mean, 2.0 / 3.0);
        assert_eq!(r.dead_allies_mean, 0.0);
        assert_eq!(r.dead_enemies_mean, 5.0);
        assert_eq!(r.mean_innate_return, 2.0);
        assert_eq!(r.n_episodes, 3);

        let single = aggregate(7, &[episode(Draw, 4, 1, -2.5)]).unwrap();
        assert_eq!(
            single,
            MetricsRecord {
                step: 7,
                battle_won_mean: 0.0,
                dead_allies_mean: 4.0,
                dead_enemies_mean: 1.0,
                mean_innate_return: -2.5,
                n_episodes: 1,
            }
        );
        assert!(aggregate(0, &[]).is_err());
    }

    #[test]
    fn csv_format() {
        assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
        let text = to_csv(&[record(0, 0.5), record(5000, 1.0 / 3.0)]);
        assert_eq!(
            text,
            format!(
                "{CSV_HEADER}\n0,0.500000,1.250000,4.500000,-3.207123,8\n\
                 5000,0.333333,1.250000,4.500000,-3.207123,8\n"
            )
        );
    }

    #[test]
    fn csv_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let records = vec![record(0, 0.125), record(100, 0.875)];
        write_csv(&records, &path).unwrap();
        let first = fs::read(&path).unwrap();
        write_csv(&records, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].step, 100);
        assert!((back[0].mean_innate_return - records[0].mean_innate_return).abs() <= 5e-7);

        assert!(write_csv(&[record(5, 0.0), record(1, 0.0)], &path).is_err());
        assert!(parse_csv("step,won\n1,2\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,x,0,0,0,1\n")).is_err());
        assert!(read_csv(&dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn metric_names() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("battle_lost_mean".parse::<Metric>().is_err());
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(moving_average(&[2.0, 4.0], 32), vec![2.0, 3.0]);
        assert_eq!(moving_average(&[], 3), Vec::<f64>::new());
    }

    fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
                pts.split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn constant_series_is_horizontal() {
        let s = Series {
            label: "neutral".into(),
            records: (0..5).map(|i| record(i * 10, 0.4)).collect(),
        };
        let svg = render_chart_svg("qmix", &[s], Metric::BattleWon, None).unwrap();
        let lines = polylines(&svg);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].iter().all(|&(_, y)| y == lines[0][0].1));
        assert!(svg.contains("battle_won_mean") && svg.contains("environment steps"));
    }

    #[test]
    fn three_series_three_polylines_and_stable_bytes() {
        let series: Vec<Series> = ["coward", "neutral", "reckless"]
            .iter()
            .enumerate()
            .map(|(k, name)| Series {
                label: name.to_string(),
                records: (0..4).map(|i| record(i * 100, (i + k as u64) as f64 / 8.0)).collect(),
            })
            .collect();
        let a = render_chart_svg("iql <x>", &series, Metric::BattleWon, Some(2)).unwrap();
        let b = render_chart_svg("iql <x>", &series, Metric::BattleWon, Some(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(polylines(&a).len(), 3);
        assert!(a.contains("iql &lt;x&gt;"));
        for name in ["coward", "neutral", "reckless"] {
            assert!(a.contains(name));
        }
        assert!(render_chart_svg("x", &[], Metric::BattleWon, None).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_is_order_free_and_bounded(
            eps in prop::collection::vec(
                (0usize..3, 0usize..=5, 0usize..=5, -1e3f64..1e3),
                1..40,
            ),
            seed in any::<u64>(),
        ) {
            let outcomes = [Outcome::Won, Outcome::Lost, Outcome::Draw];
            let eps: Vec<EpisodeOutcome> = eps
                .into_iter()
                .map(|(o, a, e, r)| episode(outcomes[o], a, e, r))
                .collect();
            let mut shuffled = eps.clone();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            let a = aggregate(3, &eps).unwrap();
            prop_assert_eq!(a, aggregate(3, &shuffled).unwrap());
            prop_assert!(a.validate(5, 5).is_ok());
        }

        #[test]
        fn csv_parse_back_matches_to_six_decimals(
            rows in prop::collection::vec((0u64..1_000_000, 0f64..=1.0, -1e4f64..1e4, 1usize..100), 0..20)
        ) {
            let mut records: Vec<MetricsRecord> = rows
                .into_iter()
                .map(|(step, won, ret, n)| MetricsRecord {
                    step,
                    battle_won_mean: won,
                    dead_allies_mean: won * 5.0,
                    dead_enemies_mean: 5.0 - won,
                    mean_innate_return: ret,
                    n_episodes: n,
                })
                .collect();
            records.sort_by_key(|r| r.step);
            let back = parse_csv(&to_csv(&records)).unwrap();
            prop_assert_eq!(back.len(), records.len());
            for (a, b) in records.iter().zip(&back) {
                prop_assert_eq!(a.step, b.step);
                prop_assert_eq!(a.n_episodes, b.n_episodes);
                for m in Metric::ALL {
                    prop_assert!((a.metric(m) - b.metric(m)).abs() <= 5e-7 + 1e-12 * a.metric(m).abs());
                }
            }
        }
    }
}
