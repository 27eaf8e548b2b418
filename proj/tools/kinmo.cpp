// kinmo: command-line front end for the text-to-motion pipeline.

#include <Eigen/Dense>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "kinmo/alignment.hpp"
#include "kinmo/annotator.hpp"
#include "kinmo/checkpoint.hpp"
#include "kinmo/control.hpp"
#include "kinmo/corpus.hpp"
#include "kinmo/error.hpp"
#include "kinmo/eval.hpp"
#include "kinmo/generator.hpp"
#include "kinmo/kinematics.hpp"
#include "kinmo/motion_io.hpp"
#include "kinmo/reasoner.hpp"
#include "kinmo/rqvae.hpp"
#include "kinmo/toy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kinmo;

namespace {

// ---- configuration ----

std::set<std::string> known_keys() {
  std::set<std::string> keys = {"seed"};
  for (const auto& set : {AlignConfig::keys(), RqvaeConfig::keys(), GenConfig::keys(), ControlConfig::keys()})
    keys.insert(set.begin(), set.end());
  const Config toy = ToyCorpusSpec{}.to_config();
  for (const auto& [k, v] : toy.entries()) keys.insert(k);
  return keys;
}

// Keys that only steer sampling and may differ from the training run.
const std::set<std::string> kSamplingKeys = {"gen.guidance", "gen.remask_ratio", "gen.temperature"};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  Config config;

  void resolve() {
    if (!config_path.empty()) config = Config::load(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    config.require_known(known_keys());
    if (seed) config.set("seed", static_cast<long long>(*seed));
  }
  std::uint64_t run_seed() const { return static_cast<std::uint64_t>(config.get("seed", 0LL)); }
};

bool same_value(const std::string& a, const std::string& b) {
  if (a == b) return true;
  char* ea = nullptr;
  char* eb = nullptr;
  const double x = std::strtod(a.c_str(), &ea), y = std::strtod(b.c_str(), &eb);
  return *ea == '\0' && *eb == '\0' && !a.empty() && !b.empty() && x == y;
}

// Every user-supplied key stored in the checkpoint must agree with it.
void check_config(const Checkpoint& ckpt, const Config& user, const fs::path& path) {
  for (const auto& [key, value] : user.entries()) {
    if (kSamplingKeys.contains(key) || !ckpt.config.has(key)) continue;
    const std::string stored = ckpt.config.get(key, std::string());
    if (!same_value(stored, value))
      throw CheckpointError(path.string() + " was trained with " + key + "=" + stored + " but the config sets " +
                            value);
  }
}

AlignmentModel load_alignment(const fs::path& p, const Config& user) {
  const Checkpoint c = load_checkpoint(p, kAlignmentComponent);
  check_config(c, user, p);
  return AlignmentModel::from_checkpoint(c);
}
RqvaeModel load_rqvae(const fs::path& p, const Config& user) {
  const Checkpoint c = load_checkpoint(p, kRqvaeComponent);
  check_config(c, user, p);
  return RqvaeModel::from_checkpoint(c);
}
GeneratorModel load_generator(const fs::path& p, const Config& user) {
  const Checkpoint c = load_checkpoint(p, kGeneratorComponent);
  check_config(c, user, p);
  return GeneratorModel::from_checkpoint(c);
}
ControlModel load_control(const fs::path& p, const Config& user, const GeneratorModel& gen) {
  const Checkpoint c = load_checkpoint(p, kControlComponent);
  check_config(c, user, p);
  return ControlModel::from_checkpoint(c, gen);
}

void print_epoch(const EpochLog& log) {
  std::ostringstream line;
  line << "epoch=" << log.epoch << " loss=" << format_number(log.loss);
  for (const auto& [name, value] : log.terms) line << ' ' << name << '=' << format_number(value);
  std::cout << line.str() << std::endl;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

fs::path sidecar(const fs::path& motion) { return fs::path(motion.string() + ".json"); }

// ---- generation helpers ----

struct GenArgs {
  std::string align, rqvae, gen, control;
  std::string level = "interaction";
  std::optional<double> guidance, remask_ratio, temperature;
};

void add_model_options(CLI::App* cmd, GenArgs& g, bool with_control) {
  cmd->add_option("--align", g.align, "alignment checkpoint")->required();
  cmd->add_option("--rqvae", g.rqvae, "RQ-VAE checkpoint")->required();
  cmd->add_option("--gen", g.gen, "generator checkpoint")->required();
  if (with_control) cmd->add_option("--control", g.control, "control checkpoint")->required();
  cmd->add_option("--level", g.level, "finest text level: g|global, gj|joint, gji|interaction");
  cmd->add_option("--guidance", g.guidance, "classifier-free guidance scale");
  cmd->add_option("--remask-ratio", g.remask_ratio, "share of tokens re-masked per refinement stage");
  cmd->add_option("--temperature", g.temperature, "sampling temperature (0 = argmax)");
}

// Accepts the full level names and the short forms g, gj, gji.
Level cli_level(const std::string& name) {
  if (name == "g") return Level::Global;
  if (name == "gj") return Level::Joint;
  if (name == "gji") return Level::Interaction;
  return parse_level(name);
}

GenerationOptions make_options(const GenArgs& g, const Config& cfg, std::uint64_t seed) {
  GenerationOptions o;
  o.max_level = cli_level(g.level);
  o.seed = seed;
  o.guidance = g.guidance;
  o.remask_ratio = g.remask_ratio;
  o.temperature = g.temperature;
  if (!o.guidance && cfg.has("gen.guidance")) o.guidance = cfg.get("gen.guidance", 0.0);
  if (!o.remask_ratio && cfg.has("gen.remask_ratio")) o.remask_ratio = cfg.get("gen.remask_ratio", 0.0);
  if (!o.temperature && cfg.has("gen.temperature")) o.temperature = cfg.get("gen.temperature", 0.0);
  return o;
}

json grid_json(const MotionTokenGrid& g) {
  json rows = json::array();
  for (Eigen::Index t = 0; t < g.tokens.rows(); ++t) {
    json row = json::array();
    for (Eigen::Index q = 0; q < g.tokens.cols(); ++q) row.push_back(g.tokens(t, q));
    rows.push_back(row);
  }
  return rows;
}

json metadata_json(const std::string& text, const GenerationMetadata& m, const MotionTokenGrid& grid) {
  json j;
  j["text"] = text;
  j["seed"] = m.seed;
  j["frames"] = m.frames;
  j["level_used"] = std::string(to_string(m.level_used));
  j["reasoner_fallback"] = m.reasoner_fallback;
  j["reasoner_error"] = m.reasoner_error;
  j["annotation"] = format_annotation(m.annotation);
  j["tokens"] = grid_json(grid);
  return j;
}

void save_generated(const fs::path& out, const MotionSequence& motion, const json& meta) {
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_motion(out, motion);
  write_text(sidecar(out), meta.dump(2) + "\n");
}

std::string entry_seed_name(const std::string& name, int repeat, int repeats) {
  return repeats > 1 ? name + "_r" + std::to_string(repeat) : name;
}

// ---- evaluation helpers ----

struct Generated {
  std::string name;
  MotionSequence motion;
  json meta;
};

std::vector<Generated> load_generated(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".kmot") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Generated> out;
  for (const auto& f : files) {
    Generated g{f.stem().string(), load_motion(f), json::object()};
    if (fs::exists(sidecar(f))) g.meta = read_json(sidecar(f));
    out.push_back(std::move(g));
  }
  if (out.empty()) throw InsufficientSamples("no .kmot files in " + dir.string());
  return out;
}

HierarchicalAnnotation generated_annotation(const Generated& g) {
  if (g.meta.contains("annotation")) return parse_annotation(g.meta["annotation"].get<std::string>());
  if (g.meta.contains("text")) {
    HierarchicalAnnotation a;
    a.global_texts = {g.meta["text"].get<std::string>()};
    return a;
  }
  throw FormatError(g.name + ".kmot has no metadata side-car with its text");
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

MetricReport eval_retrieval(const Corpus& ref, const AlignmentModel& align, Level level, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> text, motion, captions;
  HashingTextEmbedder embedder;
  for (const auto& e : ref) {
    text.push_back(embed_text(e.annotation, level, align));
    motion.push_back(embed_motion(e.motion, align));
    captions.push_back(embedder.embed(e.annotation.global_texts.at(0)));
  }
  const Eigen::MatrixXd s = similarity_matrix(stack(text), stack(motion));
  const Eigen::MatrixXd c = stack(captions);
  Eigen::VectorXd norms = c.rowwise().norm();
  const Eigen::MatrixXd cn = norms.cwiseMax(1e-12).cwiseInverse().asDiagonal() * c;
  const Eigen::MatrixXd sims = cn * cn.transpose();
  MetricReport r;
  r.set("suite", std::string("retrieval"));
  r.set("level", std::string(to_string(level)));
  r.set("pairs", static_cast<double>(ref.size()));
  r.set("med_rank_pooling", std::string("ranks pooled over batches, then median"));
  r.set("caption_similarity", std::string("hashing text embedder cosine"));
  for (const RetrievalProtocol& p : {RetrievalProtocol::all(), RetrievalProtocol::all_threshold(),
                                     RetrievalProtocol::dissimilar_subset(), RetrievalProtocol::small_batches(32, seed)}) {
    if (p.kind == RetrievalProtocol::Kind::SmallBatches && s.rows() < p.batch) {
      r.set(p.name() + ".status", std::string("skipped: fewer than 32 pairs"));
      continue;
    }
    r.add(retrieval_report(s, p, sims), p.name() + ".");
  }
  return r;
}

MetricReport eval_generation(const std::vector<Generated>& pred, const Corpus& ref, const AlignmentModel& align,
                             int pool, int pairs, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> ref_motion, text, motion;
  for (const auto& e : ref) ref_motion.push_back(embed_motion(e.motion, align));
  std::map<std::string, std::vector<Eigen::VectorXd>> by_text;
  for (const auto& g : pred) {
    const HierarchicalAnnotation a = generated_annotation(g);
    text.push_back(embed_text(a, Level::Global, align));
    motion.push_back(embed_motion(g.motion, align));
    by_text[a.global_texts.at(0)].push_back(motion.back());
  }
  const Eigen::MatrixXd tm = stack(text), mm = stack(motion);
  const int n = static_cast<int>(pred.size());
  const int used_pool = std::min(pool, n);
  const int used_pairs = std::min(pairs, n / 2);
  GenerationReport g;
  g.fid = fid(feature_moments(mm), feature_moments(stack(ref_motion)));
  g.r_precision = r_precision(tm, mm, used_pool, seed);
  g.mm_dist = mm_dist(tm, mm);
  g.diversity = used_pairs > 0 ? diversity(mm, used_pairs, seed) : 0.0;
  std::vector<Eigen::MatrixXd> groups;
  for (const auto& [t, rows] : by_text)
    if (rows.size() >= 2) groups.push_back(stack(rows));
  MetricReport r;
  r.add(g);
  if (groups.empty()) r.set("mmodality.status", std::string("skipped: no caption has two or more samples"));
  else r.set("mmodality", mmodality(groups));
  r.set("suite", std::string("generation"));
  r.set("feature_extractor", std::string("alignment motion/text encoders (global level)"));
  r.set("r_precision.pool", static_cast<double>(used_pool));
  r.set("diversity.pairs", static_cast<double>(used_pairs));
  r.set("samples", static_cast<double>(n));
  return r;
}

MetricReport eval_control(const std::vector<Generated>& pred, const fs::path& ref_dir, const Corpus& ref) {
  std::map<std::string, TrajectoryConstraint> constraints;
  for (auto& [name, c] : load_constraints(ref_dir, ref)) constraints.emplace(name, std::move(c));
  std::vector<MotionSequence> motions;
  std::vector<TrajectoryConstraint> matched;
  for (const auto& g : pred) {
    const std::string source = g.meta.contains("source") ? g.meta["source"].get<std::string>() : g.name;
    const auto it = constraints.find(source);
    if (it == constraints.end()) throw FormatError("no constraint for generated motion " + g.name);
    motions.push_back(g.motion);
    matched.push_back(it->second);
  }
  MetricReport r;
  r.add(control_metrics(motions, matched, JointSkeleton::smpl22()));
  r.set("suite", std::string("control"));
  r.set("threshold_m", 0.5);
  r.set("samples", static_cast<double>(pred.size()));
  return r;
}

MetricReport eval_editing(const std::vector<Generated>& pred, const AlignmentModel& align) {
  double total = 0.0;
  for (const auto& g : pred) total += htma_s(g.motion, generated_annotation(g).global_texts.at(0), align);
  MetricReport r;
  r.set("suite", std::string("editing"));
  r.set("htma_s", total / static_cast<double>(pred.size()));
  r.set("samples", static_cast<double>(pred.size()));
  return r;
}

std::vector<TokenizedEntry> tokenize(const Corpus& corpus, const RqvaeModel& rqvae) {
  std::vector<TokenizedEntry> data;
  for (const auto& e : corpus) data.push_back({rqvae_encode(e.motion, rqvae), e.annotation});
  return data;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinmo: hierarchical text-to-motion toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "key=value config file");
    cmd->add_option("--set", common.overrides, "config override key=value (repeatable)");
    cmd->add_option("--seed", common.seed, "random seed");
  };

  // preprocess
  std::string hml_dir, out_dir;
  bool mirror = false;
  auto* preprocess = app.add_subcommand("preprocess", "ingest a HumanML3D-layout directory into a corpus");
  preprocess->add_option("--humanml3d", hml_dir, "HumanML3D directory")->required();
  preprocess->add_option("--out", out_dir, "corpus directory")->required();
  preprocess->add_flag("--mirror", mirror, "append left/right mirrored copies to the training split");
  add_common(preprocess);

  // annotate
  std::string corpus_dir, endpoint;
  double keyframe_threshold = kDefaultKeyframeThreshold;
  auto* annotate = app.add_subcommand("annotate", "fill joint and interaction texts from motion");
  annotate->add_option("--corpus", corpus_dir, "corpus directory")->required();
  annotate->add_option("--out", out_dir, "output corpus directory (default: in place)");
  annotate->add_option("--endpoint", endpoint, "annotation service URL (key from KINMO_API_KEY)");
  annotate->add_option("--threshold", keyframe_threshold, "keyframe cosine threshold");
  add_common(annotate);

  // make-toy-data
  int toy_n = 0;
  std::string toy_families;
  auto* toy = app.add_subcommand("make-toy-data", "write a procedural toy corpus");
  toy->add_option("--n", toy_n, "number of motion-text pairs");
  toy->add_option("--families", toy_families, "comma-separated families (wave,walk,squat,turn,still)");
  toy->add_option("--out", out_dir, "corpus directory")->required();
  add_common(toy);

  // training
  std::string split = "all", out_path, align_path, rqvae_path, gen_path;
  std::optional<int> epochs;
  auto* train_align = app.add_subcommand("train-align", "train the hierarchical text-motion alignment model");
  auto* train_rq = app.add_subcommand("train-rqvae", "train the residual motion tokenizer");
  auto* train_gen = app.add_subcommand("train-gen", "train the masked and residual token generators");
  auto* train_ctl = app.add_subcommand("train-control", "train the trajectory control branch");
  for (auto* cmd : {train_align, train_rq, train_gen, train_ctl}) {
    cmd->add_option("--corpus", corpus_dir, "corpus directory")->required();
    cmd->add_option("--split", split, "split list to train on (default: all)");
    cmd->add_option("--out", out_path, "checkpoint path")->required();
    cmd->add_option("--epochs", epochs, "override the configured epoch count");
    add_common(cmd);
  }
  for (auto* cmd : {train_gen, train_ctl}) {
    cmd->add_option("--align", align_path, "alignment checkpoint")->required();
    cmd->add_option("--rqvae", rqvae_path, "RQ-VAE checkpoint")->required();
  }
  train_ctl->add_option("--gen", gen_path, "generator checkpoint")->required();

  // generate / edit / control-generate
  GenArgs gargs;
  std::string text, motion_path, mask_spec, constraint_path;
  int frames = 0, repeats = 1;
  auto* generate_cmd = app.add_subcommand("generate", "generate motion from text");
  generate_cmd->add_option("--text", text, "global description");
  generate_cmd->add_option("--frames,--length", frames, "motion length in frames");
  generate_cmd->add_option("--corpus", corpus_dir, "batch mode: one motion per corpus caption");
  generate_cmd->add_option("--repeats", repeats, "batch mode: samples per caption");
  generate_cmd->add_option("--out", out_path, "output .kmot file (or directory in batch mode)")->required();
  add_model_options(generate_cmd, gargs, false);
  add_common(generate_cmd);

  auto* edit_cmd = app.add_subcommand("edit", "re-generate masked frame ranges of a motion");
  edit_cmd->add_option("--motion,--in", motion_path, "source .kmot")->required();
  edit_cmd->add_option("--text", text, "target global description")->required();
  edit_cmd->add_option("--mask", mask_spec, "frame ranges a:b[,c:d...] to re-generate")->required();
  edit_cmd->add_option("--out", out_path, "output .kmot (default: <source>.edited.kmot)");
  add_model_options(edit_cmd, gargs, false);
  add_common(edit_cmd);

  auto* control_cmd = app.add_subcommand("control-generate", "generate motion following joint trajectories");
  control_cmd->add_option("--text", text, "global description");
  control_cmd->add_option("--constraint", constraint_path, "trajectory constraint file");
  control_cmd->add_option("--corpus", corpus_dir, "batch mode: every corpus entry with a constraint");
  control_cmd->add_option("--out", out_path, "output .kmot file (or directory in batch mode)")->required();
  add_model_options(control_cmd, gargs, true);
  add_common(control_cmd);

  // retrieve
  std::string query, level_name = "interaction";
  int top = 5;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "rank corpus motions for a text query");
  retrieve_cmd->add_option("--corpus", corpus_dir, "corpus directory")->required();
  retrieve_cmd->add_option("--align", align_path, "alignment checkpoint")->required();
  retrieve_cmd->add_option("--query", query, "global description")->required();
  retrieve_cmd->add_option("--top", top, "results to print");
  add_common(retrieve_cmd);

  // eval
  std::string suite, pred_dir, ref_dir, report_path;
  int pool = 32, pairs = 30;
  auto* eval_cmd = app.add_subcommand("eval", "compute metrics and write a JSON report");
  eval_cmd->add_option("--suite", suite, "retrieval, generation, control or editing")
      ->required()
      ->check(CLI::IsMember({"retrieval", "generation", "control", "editing"}));
  eval_cmd->add_option("--pred", pred_dir, "directory of generated .kmot files");
  eval_cmd->add_option("--ref", ref_dir, "reference corpus directory");
  eval_cmd->add_option("--align", align_path, "alignment checkpoint (feature extractor)");
  eval_cmd->add_option("--report", report_path, "output JSON report")->required();
  eval_cmd->add_option("--level", level_name, "text level for retrieval");
  eval_cmd->add_option("--pool", pool, "R-Precision pool size");
  eval_cmd->add_option("--pairs", pairs, "Diversity pair count");
  add_common(eval_cmd);

  // export-anim
  auto* export_cmd = app.add_subcommand("export-anim", "write per-frame global joint positions as text");
  export_cmd->add_option("--motion", motion_path, "input .kmot")->required();
  export_cmd->add_option("--out", out_path, "output text file (default: stdout)");
  add_common(export_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    common.resolve();
    const Config& cfg = common.config;
    const std::uint64_t seed = common.run_seed();
    ReasonerClient* reasoner = nullptr;
    TemplateReasoner template_reasoner;
    reasoner = &template_reasoner;

    if (*preprocess) {
      IngestResult r = ingest_humanml3d(hml_dir, *reasoner);
      if (mirror) {
        const std::size_t n = r.corpus.size();
        std::set<std::string> train(r.train.begin(), r.train.end());
        for (std::size_t i = 0; i < n; ++i) {
          if (!train.contains(r.corpus[i].name)) continue;
          CorpusEntry m = mirror_entry(r.corpus[i]);
          r.train.push_back(m.name);
          r.corpus.push_back(std::move(m));
        }
      }
      save_corpus(out_dir, r.corpus);
      save_split(out_dir, "train", r.train);
      save_split(out_dir, "val", r.val);
      save_split(out_dir, "test", r.test);
      std::cout << "entries=" << r.corpus.size() << " train=" << r.train.size() << " val=" << r.val.size()
                << " test=" << r.test.size() << "\n";
    } else if (*annotate) {
      Corpus corpus = load_corpus(corpus_dir);
      HashingTextEmbedder embedder;
      RuleBasedPoseDescriber describer;
      StubAnnotator stub;
      std::unique_ptr<RemoteAnnotator> remote;
      AnnotatorClient* client = &stub;
      if (!endpoint.empty()) {
        const char* key = std::getenv("KINMO_API_KEY");
        remote = std::make_unique<RemoteAnnotator>(endpoint, key ? key : "");
        client = remote.get();
      }
      AnnotateOptions opts;
      opts.keyframe_threshold = keyframe_threshold;
      for (auto& e : corpus)
        e.annotation = annotate_sequence(e.motion, e.annotation.global_texts, embedder, describer, *client,
                                         JointSkeleton::smpl22(), opts);
      save_corpus(out_dir.empty() ? corpus_dir : out_dir, corpus);
      std::cout << "annotated=" << corpus.size() << "\n";
    } else if (*toy) {
      ToyCorpusSpec spec = ToyCorpusSpec::from(cfg);
      if (toy_n > 0) spec.n_pairs = toy_n;
      if (!toy_families.empty()) {
        spec.families.clear();
        std::stringstream ss(toy_families);
        for (std::string f; std::getline(ss, f, ',');) spec.families.push_back(parse_toy_family(f));
      }
      const ToyCorpus corpus = make_toy_corpus(spec, seed);
      save_corpus(out_dir, corpus.corpus);
      save_constraints(out_dir, corpus.corpus, corpus.constraints);
      std::cout << "pairs=" << corpus.corpus.size() << "\n";
    } else if (*train_align) {
      AlignConfig ac = AlignConfig::from(cfg);
      if (epochs) ac.epochs = *epochs;
      const auto r = train_alignment(load_corpus(corpus_dir, split), ac, seed, print_epoch);
      save_checkpoint(out_path, r.model.to_checkpoint());
    } else if (*train_rq) {
      RqvaeConfig rc = RqvaeConfig::from(cfg);
      if (epochs) rc.epochs = *epochs;
      const auto r = train_rqvae(load_corpus(corpus_dir, split), rc, seed, print_epoch);
      save_checkpoint(out_path, r.model.to_checkpoint());
    } else if (*train_gen) {
      GenConfig gc = GenConfig::from(cfg);
      if (epochs) gc.epochs = *epochs;
      const AlignmentModel align = load_alignment(align_path, cfg);
      const RqvaeModel rq = load_rqvae(rqvae_path, cfg);
      const auto data = tokenize(load_corpus(corpus_dir, split), rq);
      const auto r = train_generator(data, align, rq.config().codebook_size, gc, seed, print_epoch);
      save_checkpoint(out_path, r.model.to_checkpoint());
    } else if (*train_ctl) {
      ControlConfig cc = ControlConfig::from(cfg);
      if (epochs) cc.epochs = *epochs;
      const AlignmentModel align = load_alignment(align_path, cfg);
      const RqvaeModel rq = load_rqvae(rqvae_path, cfg);
      const GeneratorModel gen = load_generator(gen_path, cfg);
      const Corpus corpus = load_corpus(corpus_dir, split);
      std::map<std::string, const CorpusEntry*> by_name;
      for (const auto& e : corpus) by_name[e.name] = &e;
      std::vector<ControlEntry> data;
      for (auto& [name, c] : load_constraints(corpus_dir, corpus))
        data.push_back({rqvae_encode(by_name.at(name)->motion, rq), by_name.at(name)->annotation, c});
      if (data.empty()) throw InvalidMotion("no constraint files in " + corpus_dir);
      const auto r = train_control(data, align, rq, gen, cc, seed, print_epoch);
      save_checkpoint(out_path, r.model.to_checkpoint());
    } else if (*generate_cmd || *edit_cmd || *control_cmd) {
      const AlignmentModel align = load_alignment(gargs.align, cfg);
      const RqvaeModel rq = load_rqvae(gargs.rqvae, cfg);
      const GeneratorModel gen = load_generator(gargs.gen, cfg);
      const GenerationModels models{&align, &rq, &gen};
      const GenerationOptions opts = make_options(gargs, cfg, seed);

      if (*generate_cmd) {
        if (!corpus_dir.empty()) {
          if (repeats < 1) throw ConfigError("--repeats must be positive");
          const Corpus corpus = load_corpus(corpus_dir);
          for (std::size_t i = 0; i < corpus.size(); ++i)
            for (int k = 0; k < repeats; ++k) {
              GenerationOptions o = opts;
              o.seed = seed + 1000 * i + static_cast<std::uint64_t>(k);
              const std::string& caption = corpus[i].annotation.global_texts.at(0);
              const auto r = generate(caption, *reasoner, models, corpus[i].motion.frames(), o);
              json meta = metadata_json(caption, r.metadata, r.grid);
              meta["source"] = corpus[i].name;
              save_generated(fs::path(out_path) / (entry_seed_name(corpus[i].name, k, repeats) + ".kmot"),
                             r.motion, meta);
            }
          std::cout << "generated=" << corpus.size() * static_cast<std::size_t>(repeats) << "\n";
        } else {
          if (text.empty() || frames < 1) throw ConfigError("generate needs --text and --frames (or --corpus)");
          const auto r = generate(text, *reasoner, models, frames, opts);
          save_generated(out_path, r.motion, metadata_json(text, r.metadata, r.grid));
          if (r.metadata.reasoner_fallback)
            std::cerr << "warning: reasoner failed (" << r.metadata.reasoner_error << "); used the global level\n";
        }
      } else if (*edit_cmd) {
        if (out_path.empty()) out_path = fs::path(motion_path).replace_extension(".edited.kmot").string();
        const MotionSequence source = load_motion(motion_path);
        const MotionTokenGrid grid = rqvae_encode(source, rq);
        const std::vector<bool> mask = parse_frame_mask(mask_spec, source.frames(), grid.downsample);
        HierarchicalAnnotation annotation;
        GenerationMetadata meta;
        try {
          annotation = reasoner->expand(text);
          annotation.validate();
          meta.level_used = opts.max_level;
        } catch (const Error& e) {
          annotation = HierarchicalAnnotation{};
          annotation.global_texts = {text};
          meta.reasoner_fallback = true;
          meta.reasoner_error = e.what();
        }
        GenerationOptions o = opts;
        o.max_level = meta.level_used;
        const MotionTokenGrid edited = edit_infill(grid, mask, annotation, models, o);
        meta.annotation = annotation;
        meta.seed = seed;
        meta.frames = source.frames();
        json j = metadata_json(text, meta, edited);
        j["source"] = fs::path(motion_path).stem().string();
        j["mask"] = mask_spec;
        save_generated(out_path, rq.decode(edited), j);
      } else {
        const ControlModel control = load_control(gargs.control, cfg, gen);
        auto run = [&](const std::string& caption, const TrajectoryConstraint& c, const fs::path& out,
                       const std::string& source, std::uint64_t s) {
          GenerationOptions o = opts;
          o.seed = s;
          const auto r = controlled_generate(caption, c, 0, *reasoner, models, control, o);
          json meta = metadata_json(caption, r.generation.metadata, r.generation.grid);
          meta["avg_err"] = r.avg_err;
          meta["max_err"] = r.max_err;
          meta["trajectory_failed"] = r.trajectory_failed;
          if (!source.empty()) meta["source"] = source;
          save_generated(out, r.generation.motion, meta);
          std::cout << out.filename().string() << " avg_err=" << format_number(r.avg_err)
                    << " max_err=" << format_number(r.max_err) << "\n";
        };
        if (!corpus_dir.empty()) {
          const Corpus corpus = load_corpus(corpus_dir);
          std::map<std::string, const CorpusEntry*> by_name;
          for (const auto& e : corpus) by_name[e.name] = &e;
          std::uint64_t i = 0;
          for (auto& [name, c] : load_constraints(corpus_dir, corpus))
            run(by_name.at(name)->annotation.global_texts.at(0), c, fs::path(out_path) / (name + ".kmot"), name,
                seed + 1000 * i++);
        } else {
          if (text.empty() || constraint_path.empty())
            throw ConfigError("control-generate needs --text and --constraint (or --corpus)");
          run(text, read_constraint(constraint_path), out_path, "", seed);
        }
      }
    } else if (*retrieve_cmd) {
      const AlignmentModel align = load_alignment(align_path, cfg);
      const Corpus corpus = load_corpus(corpus_dir);
      const Eigen::VectorXd q = embed_text(reasoner->expand(query), Level::Interaction, align);
      std::vector<std::pair<double, std::size_t>> scored;
      for (std::size_t i = 0; i < corpus.size(); ++i)
        scored.emplace_back(-cosine(q, embed_motion(corpus[i].motion, align)), i);
      std::stable_sort(scored.begin(), scored.end());
      for (int r = 0; r < std::min<int>(top, static_cast<int>(scored.size())); ++r)
        std::cout << r + 1 << ' ' << corpus[scored[static_cast<std::size_t>(r)].second].name << ' '
                  << format_number(-scored[static_cast<std::size_t>(r)].first) << "\n";
    } else if (*eval_cmd) {
      if (align_path.empty() && suite != "control") throw ConfigError("eval --suite " + suite + " needs --align");
      if (ref_dir.empty() && suite != "editing") throw ConfigError("eval --suite " + suite + " needs --ref");
      if (pred_dir.empty() && suite != "retrieval") throw ConfigError("eval --suite " + suite + " needs --pred");
      MetricReport report;
      if (suite == "retrieval") {
        report = eval_retrieval(load_corpus(ref_dir), load_alignment(align_path, cfg), cli_level(level_name), seed);
      } else if (suite == "generation") {
        report = eval_generation(load_generated(pred_dir), load_corpus(ref_dir), load_alignment(align_path, cfg), pool,
                                 pairs, seed);
      } else if (suite == "control") {
        const Corpus ref = load_corpus(ref_dir);
        report = eval_control(load_generated(pred_dir), ref_dir, ref);
      } else {
        report = eval_editing(load_generated(pred_dir), load_alignment(align_path, cfg));
      }
      report.set("seed", static_cast<double>(seed));
      if (fs::path(report_path).has_parent_path()) fs::create_directories(fs::path(report_path).parent_path());
      report.save(report_path);
      std::cout << report.dump();
    } else if (*export_cmd) {
      const Eigen::MatrixXd g = local_to_global(load_motion(motion_path), JointSkeleton::smpl22());
      std::ostringstream out;
      out << "# frames " << g.rows() << " joints " << kNumJoints << "\n";
      out << std::setprecision(9);
      for (Eigen::Index t = 0; t < g.rows(); ++t) {
        out << t;
        for (Eigen::Index c = 0; c < g.cols(); ++c) out << ' ' << g(t, c);
        out << "\n";
      }
      if (out_path.empty()) std::cout << out.str();
      else write_text(out_path, out.str());
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
