use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

pub struct OutDir {
    root: PathBuf,
    gnuplot: bool,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path, gnuplot: bool) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        let probe = root.join(".stix-write-test");
        File::create(&probe).with_context(|| format!("output directory {} is not writable", root.display()))?;
        fs::remove_file(&probe).ok();
        Ok(Self { root: root.to_path_buf(), gnuplot, written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<PathBuf> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn write_gnuplot(&mut self, name: &str, script: &str) -> Result<()> {
        if self.gnuplot {
            self.write_with(name, |w| Ok(w.write_all(script.as_bytes())?))?;
        }
        Ok(())
    }

    pub fn written(&self) -> Vec<String> {
        self.written.iter().map(|p| p.display().to_string()).collect()
    }
}

pub fn trajectory_script(csv: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 't (ps)'\n\
         set multiplot layout 2,1\n\
         set ylabel 'occupation'\n\
         plot '{csv}' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines, '' using 1:5 with lines\n\
         set logscale y\n\
         set ylabel '|rho_01|'\n\
         plot '{csv}' using 1:9 with lines\n\
         unset multiplot\n"
    )
}

/// Line plot of the metric columns against the first column.
pub fn sweep_script(csv: &str, xlabel: &str, first_metric_col: usize) -> String {
    let c = first_metric_col;
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel '{xlabel}'\n\
         set multiplot layout 3,1\n\
         plot '{csv}' using 1:{c} with linespoints\n\
         plot '{csv}' using 1:{} with linespoints\n\
         plot '{csv}' using 1:{} with linespoints\n\
         unset multiplot\n",
        c + 1,
        c + 2
    )
}

pub fn map_script(matrix: &str, title: &str, areas: &[f64], delays: &[f64]) -> String {
    let (a0, a1) = (areas[0], areas[areas.len() - 1]);
    let (d0, d1) = (delays[0], delays[delays.len() - 1]);
    let da = if areas.len() > 1 { (a1 - a0) / (areas.len() - 1) as f64 } else { 1.0 };
    let dd = if delays.len() > 1 { (d1 - d0) / (delays.len() - 1) as f64 } else { 1.0 };
    format!(
        "set title '{title}'\n\
         set xlabel 'TPE area (pi)'\n\
         set ylabel 'delay (ps)'\n\
         set view map\n\
         plot '{matrix}' matrix using ({a0}+$1*{da}):({d0}+$2*{dd}):3 with image notitle\n"
    )
}
