use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use spreadcode::codec::{decode, encode, object_digest, ObjectData, Piece, PieceFile};
use spreadcode::repair::{pair_partner, plan_min_download, plan_pair_repair, three_partners_alpha2, LiveSet};
use spreadcode::resilience::{
    availability, availability_csv, bandwidth_csv, compare_bandwidth, default_grid, rho_exhaustive, rho_sampled,
    rho_table_exhaustive, rho_table_sampled, RhoTable, DEFAULT_BUDGET,
};
use spreadcode::sim::{sim_init, ScenarioConfig};
use spreadcode::{CodeParams, NodeId, PolyTable, SpreadLayout};

#[derive(Parser)]
#[command(name = "spreadcode", version, about = "Projective self-repairing codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CodeArgs {
    /// Object dimension (number of fragments).
    #[arg(long = "B", value_name = "B", required_unless_present = "layout")]
    dim: Option<u32>,
    /// Pieces per node.
    #[arg(long, required_unless_present = "layout")]
    alpha: Option<u32>,
    /// Primitive polynomial for GF(2^B), hex.
    #[arg(long, value_parser = parse_hex)]
    poly: Option<u32>,
    /// Read the layout from a file instead.
    #[arg(long, conflicts_with_all = ["dim", "alpha", "poly"])]
    layout: Option<PathBuf>,
}

impl CodeArgs {
    fn params(&self) -> Result<CodeParams> {
        let (Some(dim), Some(alpha)) = (self.dim, self.alpha) else {
            return Ok(*self.build()?.params());
        };
        Ok(match self.poly {
            Some(poly) => CodeParams::derive_with_poly(dim, alpha, poly)?,
            None => CodeParams::derive_with_table(dim, alpha, &PolyTable::from_env()?)?,
        })
    }

    fn build(&self) -> Result<SpreadLayout> {
        match &self.layout {
            Some(path) => Ok(SpreadLayout::parse(&read_text(path)?)?),
            None => Ok(SpreadLayout::build(self.params()?)?),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print n, k and the field polynomial for (B, alpha).
    Params(CodeArgs),
    /// Write the layout file.
    Layout {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a layout file is a spread.
    Verify {
        #[arg(long)]
        layout: PathBuf,
    },
    /// Split a file into piece files, one per stored piece.
    Encode {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rebuild a file from piece files.
    Decode {
        /// Directory of piece files written by `encode`.
        #[arg(long)]
        dir: PathBuf,
        /// Only use pieces of these nodes.
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<NodeId>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Plan, and optionally run, the repair of one node.
    RepairPlan {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long)]
        failed: NodeId,
        /// Repair from this pair of nodes.
        #[arg(long, value_delimiter = ',', num_args = 1, conflicts_with = "degree")]
        pair: Vec<NodeId>,
        /// Minimal-download plan contacting at most this many nodes.
        #[arg(long)]
        degree: Option<usize>,
        /// Other unavailable nodes.
        #[arg(long, value_delimiter = ',')]
        dead: Vec<NodeId>,
        /// Piece directory: read the sources and write the regenerated pieces.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Nodes that complete `first` to a repair pair for `failed`.
    Partners {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long)]
        failed: NodeId,
        #[arg(long)]
        first: NodeId,
    },
    /// Fraction of x-node subsets that can decode.
    Rho {
        #[command(flatten)]
        code: CodeArgs,
        /// Single subset size; the whole table otherwise.
        #[arg(long)]
        x: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u128,
        /// Estimate by sampling instead of enumerating.
        #[arg(long, requires = "seed")]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Availability under i.i.d. node availability, next to an MDS code.
    Availability {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, requires = "seed")]
        samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repair download per degree against the MSR figure.
    Bandwidth {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 4])]
        d: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a cluster scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-epoch CSV; printed after the summary otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_hex(s: &str) -> Result<u32, String> {
    u32::from_str_radix(s.trim_start_matches("0x"), 16).map_err(|_| format!("invalid hex polynomial {s:?}"))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn piece_path(dir: &Path, node: NodeId, piece: usize) -> PathBuf {
    dir.join(format!("N{}.{}.piece", node.get(), piece + 1))
}

/// `N<l>.<j>.piece` -> (node, 0-based piece).
fn parse_piece_name(name: &str) -> Option<(NodeId, usize)> {
    let (node, piece) = name.strip_suffix(".piece")?.split_once('.')?;
    let piece: usize = piece.parse().ok()?;
    Some((node.parse().ok()?, piece.checked_sub(1)?))
}

fn read_piece(path: &Path) -> Result<PieceFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    PieceFile::parse(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn rho_table(layout: &SpreadLayout, budget: u128, workers: usize, samples: Option<u64>, seed: Option<u64>) -> Result<RhoTable> {
    Ok(match (samples, seed) {
        (Some(samples), Some(seed)) => rho_table_sampled(layout, samples, seed)?,
        _ => rho_table_exhaustive(layout, budget, workers)?,
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Params(code) => println!("{}", code.params()?),
        Command::Layout { code, out } => emit(&code.build()?.to_text(), out.as_deref())?,
        Command::Verify { layout } => {
            let layout = SpreadLayout::parse(&read_text(&layout)?)?;
            let report = layout.verify();
            ensure!(report.is_ok(), "not a spread:\n{report}");
            println!("spread ok: {} nodes cover {} points", layout.node_count(), (1u64 << layout.params().dim) - 1);
        }
        Command::Encode { code, input, out_dir } => {
            let layout = code.build()?;
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let object = ObjectData::from_bytes(&bytes, layout.params().dim);
            let digest = object_digest(&bytes);
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let mut written = 0;
            for np in encode(&layout, &object)? {
                for (j, piece) in np.pieces.into_iter().enumerate() {
                    let file = PieceFile { piece, object: digest.clone(), size: bytes.len() as u64 };
                    let path = piece_path(&out_dir, np.node, j);
                    fs::write(&path, file.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
                    written += 1;
                }
            }
            println!("object={digest} size={} pieces={written}", bytes.len());
        }
        Command::Decode { dir, nodes, output } => {
            let mut files = Vec::new();
            for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
                let path = entry?.path();
                let Some((node, _)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_piece_name) else {
                    continue;
                };
                if nodes.is_empty() || nodes.contains(&node) {
                    files.push(read_piece(&path)?);
                }
            }
            let Some(first) = files.first() else { bail!("no piece files found in {}", dir.display()) };
            let (digest, size) = (first.object.clone(), first.size);
            ensure!(files.iter().all(|f| f.object == digest && f.size == size), "pieces belong to different objects");
            let dim = first.piece.coeff.width();
            let pieces: Vec<Piece> = files.into_iter().map(|f| f.piece).collect();
            let used = pieces.len();
            let bytes = decode(&pieces, dim)?.to_bytes(size as usize);
            ensure!(object_digest(&bytes) == digest, "decoded bytes do not match the object digest");
            fs::write(&output, &bytes).with_context(|| format!("writing {}", output.display()))?;
            println!("object={digest} size={size} pieces_used={used}");
        }
        Command::RepairPlan { code, failed, pair, degree, dead, dir } => {
            let layout = code.build()?;
            let plan = match pair.as_slice() {
                [] => {
                    let mut down = dead.clone();
                    down.push(failed);
                    down.retain(|n| layout.contains_node(*n));
                    plan_min_download(&layout, failed, degree.unwrap_or(2), &LiveSet::without(layout.node_count(), &down))?
                }
                &[a, b] => {
                    ensure!(!dead.contains(&a) && !dead.contains(&b), "pair includes a dead node");
                    plan_pair_repair(&layout, failed, (a, b))?
                }
                _ => bail!("--pair takes exactly two nodes"),
            };
            print!("{plan}");
            if let Some(dir) = dir {
                let mut header = None;
                let mut payloads = Vec::with_capacity(plan.downloads.len());
                for d in &plan.downloads {
                    let file = read_piece(&piece_path(&dir, d.node, d.piece))?;
                    ensure!(file.piece.coeff == layout.basis(d.node)[d.piece], "{} does not match the layout", d);
                    header.get_or_insert((file.object.clone(), file.size));
                    payloads.push(file.piece.payload);
                }
                let (object, size) = header.context("plan has no downloads")?;
                for (j, piece) in plan.reconstruct(&payloads)?.into_iter().enumerate() {
                    let path = piece_path(&dir, failed, j);
                    let file = PieceFile { piece, object: object.clone(), size };
                    fs::write(&path, file.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
                }
                println!("regenerated {failed} in {}", dir.display());
            }
        }
        Command::Partners { code, failed, first } => {
            let layout = code.build()?;
            let partners = if layout.params().alpha == 2 {
                three_partners_alpha2(&layout, failed, first)?.to_vec()
            } else {
                pair_partner(&layout, failed, first)?
            };
            let names: Vec<String> = partners.iter().map(NodeId::to_string).collect();
            println!("{}", names.join(" "));
        }
        Command::Rho { code, x, workers, budget, samples, seed, out } => {
            let layout = code.build()?;
            match (x, samples, seed) {
                (Some(x), Some(samples), Some(seed)) => {
                    let e = rho_sampled(&layout, x, samples, seed)?;
                    println!(
                        "x={x} samples={} deficient={} rho={} ci=[{},{}]",
                        e.samples, e.deficient, e.rho, e.ci.0, e.ci.1
                    );
                }
                (Some(x), _, _) => {
                    let (deficient, total, rho) = rho_exhaustive(&layout, x, budget)?;
                    println!("x={x} deficient={deficient} total={total} rho={rho}");
                }
                (None, _, _) => emit(&rho_table(&layout, budget, workers, samples, seed)?.to_csv(), out.as_deref())?,
            }
        }
        Command::Availability { code, workers, samples, seed, out } => {
            let layout = code.build()?;
            let table = rho_table(&layout, DEFAULT_BUDGET, workers, samples, seed)?;
            let grid = default_grid();
            let psrc = availability(&table, &grid);
            let mds = availability(&RhoTable::mds(table.n, table.k), &grid);
            emit(&availability_csv(&psrc, &mds), out.as_deref())?;
        }
        Command::Bandwidth { code, d, out } => {
            let layout = code.build()?;
            emit(&bandwidth_csv(&compare_bandwidth(&layout, d)?), out.as_deref())?;
        }
        Command::Simulate { scenario, seed, out } => {
            let mut config: ScenarioConfig = read_text(&scenario)?.parse()?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let mut state = sim_init(config)?;
            state.run();
            print!("{}", state.summary());
            emit(&state.report_csv(), out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            println!("status=ok code=0");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            println!("status=error code=2");
            return ExitCode::from(2);
        }
    };
    let result = run(cli.command);
    let _ = std::io::stdout().flush();
    match result {
        Ok(()) => {
            println!("status=ok code=0");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            println!("status=error code=1");
            ExitCode::from(1)
        }
    }
}
