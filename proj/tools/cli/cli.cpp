#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config.hpp"
#include "macrt/errors.hpp"
#include "macrt/eval.hpp"
#include "macrt/parallel.hpp"
#include "macrt/rng.hpp"

namespace macrt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string target;
  std::optional<unsigned> jobs;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool deterministic = false;
  std::string out;
};

struct CorpusLine {
  std::string id;
  std::string text;
};

class TargetUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string prompt_id(std::size_t line_no) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04zu", line_no);
  return buf;
}

// One prompt per line; blank lines are skipped but still advance the id.
std::vector<CorpusLine> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read prompt file '" + path + "'");
  std::vector<CorpusLine> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!is_valid_utf8(line)) throw ConfigError(path + ":" + std::to_string(no) + ": invalid UTF-8");
    if (tokenize(line).words().empty()) continue;
    out.push_back({prompt_id(no), line});
  }
  return out;
}

RunConfig resolve_config(const Flags& flags) {
  std::string path = flags.config;
  if (path.empty()) {
    if (const char* env = std::getenv("MACRT_CONFIG")) path = env;
  }
  if (path.empty()) throw ConfigError("no config given (use --config or MACRT_CONFIG)");
  RunConfig cfg = load_config(path);
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.jobs) cfg.jobs = *flags.jobs;
  if (!flags.out.empty()) cfg.paths.out_dir = flags.out;
  if (!flags.target.empty()) {
    if (flags.target == "sim") {
      cfg.target.kind = "sim";
    } else {
      cfg.target.kind = "remote";
      cfg.target.remote.url = flags.target;
    }
  }
  cfg.resume = flags.resume;
  cfg.deterministic = flags.deterministic;
  return cfg;
}

void check_health(const Runtime& rt) {
  if (const auto* remote = dynamic_cast<const RemoteTarget*>(rt.target.get())) {
    if (!remote->healthy()) throw TargetUnreachable("target " + remote->name() + " failed its health check");
  }
}

const Target& selection_target(const Runtime& rt) {
  return rt.selection_target ? *rt.selection_target : *rt.target;
}

fs::path out_dir(const Runtime& rt) {
  fs::path dir = rt.cfg.paths.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + tmp.string() + "'");
    f << content;
    if (!f) throw IoError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Prompt identify_prompt(const Runtime& rt, const std::string& text) {
  return identify(tokenize(text), rt.blacklist, rt.identify_bank, SensitivityThreshold{rt.cfg.identify.tau_sim},
                  *rt.provider);
}

json annotation(const std::string& id, const Prompt& p) {
  json rules = json::array();
  for (const auto& m : p.sensitive()) {
    json r = {{"index", m.index}, {"word", p.words()[m.index].text}, {"blacklist", m.blacklist}, {"similarity", nullptr}};
    if (m.similarity) r["similarity"] = {{"concept", m.similarity->concept_label}, {"score", m.similarity->score}};
    rules.push_back(std::move(r));
  }
  json words = json::array();
  for (const auto& w : p.words()) words.push_back(w.text);
  json j = {{"prompt_id", id},
            {"prompt", p.raw()},
            {"words", words},
            {"sensitive_indices", p.sensitive_indices()},
            {"rules", rules}};
  if (p.sensitive().empty()) j["warning"] = "no sensitive words found";
  return j;
}

// ---------------------------------------------------------------------------
// candidate selection
// ---------------------------------------------------------------------------

struct CandidateResult {
  std::optional<CandidateSet> set;
  std::string error;
};

fs::path pool_path(const Runtime& rt, const std::string& headword) {
  return fs::path(rt.cfg.paths.lexicon_dir) / (headword + ".tsv");
}

CandidateSet select_for(const Runtime& rt, const std::string& headword) {
  const fs::path path = pool_path(rt, headword);
  if (!fs::is_regular_file(path)) throw ConfigError("no lexicon pool for '" + headword + "' at " + path.string());
  const LexiconPool pool = load_pool(path.string(), rt.cfg.selection.k, headword);
  const PromptTemplate tmpl =
      rt.cfg.selection.template_kind == "visual_concept" ? PromptTemplate::visual_concept() : PromptTemplate::object();
  SelectionOptions opt;
  opt.k = rt.cfg.selection.k;
  opt.images_per_eval = rt.cfg.selection.images_per_eval;
  opt.composite_weight = rt.cfg.selection.composite_weight;
  opt.seed = mix_seeds({rt.cfg.seed, fnv1a64("select"), fnv1a64(headword)});
  opt.image_embeddings = rt.image_store.get();
  opt.jobs = effective_jobs(rt.cfg);
  return select_topk(pool, tmpl, selection_target(rt), opt);
}

CandidateResult try_select(const Runtime& rt, const std::string& headword) {
  CandidateResult r;
  try {
    r.set = select_for(rt, headword);
  } catch (const InsufficientPoolError& e) {
    r.error = e.what();
  } catch (const ConfigError& e) {
    r.error = e.what();
  } catch (const ParseError& e) {
    r.error = e.what();
  } catch (const TargetError& e) {
    r.error = e.what();
  }
  return r;
}

// Blacklisted words use their own text; similarity hits fall back to the
// concept label when the word has no pool of its own.
std::string headword_for(const Runtime& rt, const Prompt& p, const SensitiveMark& m) {
  const std::string word = to_lower(p.words()[m.index].text);
  if (m.similarity && !fs::is_regular_file(pool_path(rt, word))) return m.similarity->concept_label;
  return word;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_identify(const Runtime& rt, const std::string& prompt_file, std::ostream& out, std::ostream& err) {
  const auto corpus = read_corpus(prompt_file);
  std::string body;
  std::size_t without = 0;
  for (const auto& line : corpus) {
    const Prompt p = identify_prompt(rt, line.text);
    if (p.sensitive().empty()) {
      ++without;
      err << "warning: " << line.id << ": no sensitive words found\n";
    }
    body += annotation(line.id, p).dump() + "\n";
  }
  const fs::path path = out_dir(rt) / "identify.jsonl";
  write_text(path, body);
  out << "identify: " << corpus.size() << " records (" << without << " without sensitive words) -> "
      << path.string() << "\n";
  return kOk;
}

int cmd_select(const Runtime& rt, const std::string& headword, std::ostream& out) {
  check_health(rt);
  const CandidateSet set = select_for(rt, headword);
  const std::string body = json(set).dump(2) + "\n";
  write_text(out_dir(rt) / ("candidates_" + headword + ".json"), body);
  out << body;
  return kOk;
}

AttackRecord failed_record(const std::string& id, const Prompt& p, const std::string& error) {
  AttackRecord rec;
  rec.prompt_id = id;
  rec.status = AttackRecord::Status::failed;
  rec.error = error;
  rec.best_prompt = AdversarialPrompt{p, {}, p.raw(), {}};
  return rec;
}

std::vector<AttackRecord> read_records(const std::string& path, bool tolerate_partial_tail) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read records file '" + path + "'");
  std::vector<AttackRecord> out;
  std::string line;
  std::size_t no = 0;
  std::optional<std::size_t> bad_line;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    if (bad_line) throw ParseError(path, *bad_line, "malformed attack record");
    try {
      out.push_back(json::parse(line).get<AttackRecord>());
    } catch (const std::exception& e) {
      if (!tolerate_partial_tail) throw ParseError(path, no, std::string("malformed attack record: ") + e.what());
      bad_line = no;  // acceptable only as the final, interrupted line
    }
  }
  return out;
}

EvalOptions eval_options(const Runtime& rt) {
  EvalOptions opt;
  opt.n_values = rt.cfg.eval.n;
  opt.success_threshold = rt.cfg.eval.success_threshold;
  opt.seed = mix_seeds({rt.cfg.seed, fnv1a64("eval")});
  opt.text_provider = rt.provider.get();
  opt.similarity.safe_prompt = rt.cfg.eval.safe_prompt;
  opt.similarity.image_store = rt.image_store.get();
  opt.jobs = effective_jobs(rt.cfg);
  return opt;
}

int cmd_attack(const Runtime& rt, const std::string& corpus_file, std::ostream& out, std::ostream& err) {
  check_health(rt);
  const auto corpus = read_corpus(corpus_file);
  const fs::path dir = out_dir(rt);
  const fs::path records_path = dir / "attack_records.jsonl";

  std::map<std::string, AttackRecord> done;
  if (rt.cfg.resume && fs::exists(records_path)) {
    std::string kept;
    for (auto& rec : read_records(records_path.string(), true)) {
      kept += json(rec).dump() + "\n";
      done[rec.prompt_id] = std::move(rec);
    }
    write_text(records_path, kept);  // drops an interrupted final line
  }

  std::vector<std::size_t> pending;
  std::vector<Prompt> prompts(corpus.size());
  std::map<std::string, CandidateResult> cache;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (done.count(corpus[i].id)) continue;
    pending.push_back(i);
    prompts[i] = identify_prompt(rt, corpus[i].text);
    for (const auto& m : prompts[i].sensitive()) {
      const std::string hw = headword_for(rt, prompts[i], m);
      if (!cache.count(hw)) cache.emplace(hw, try_select(rt, hw));
    }
  }
  for (const auto& [hw, r] : cache) {
    if (!r.set) err << "warning: no candidates for '" << hw << "': " << r.error << "\n";
  }

  // Stream completed records in corpus order as they become available.
  std::ofstream stream(records_path, std::ios::binary | (rt.cfg.resume ? std::ios::app : std::ios::trunc));
  if (!stream) throw IoError("cannot write '" + records_path.string() + "'");
  std::vector<std::optional<AttackRecord>> results(pending.size());
  std::mutex mu;
  std::size_t next = 0;

  parallel_for(pending.size(), effective_jobs(rt.cfg), [&](std::size_t slot) {
    const std::size_t i = pending[slot];
    const Prompt& p = prompts[i];
    AttackRecord rec;
    std::vector<CandidateSet> sets;
    std::string error = p.sensitive().empty() ? "no sensitive words found" : "";
    for (const auto& m : p.sensitive()) {
      const CandidateResult& c = cache.at(headword_for(rt, p, m));
      if (!c.set) {
        error = c.error;
        break;
      }
      sets.push_back(*c.set);
    }
    if (error.empty()) {
      ZooConfig zoo = rt.cfg.zoo;
      zoo.seed = mix_seeds({rt.cfg.seed, fnv1a64(corpus[i].id)});
      rec = run_attack(p, sets, *rt.target, zoo);
      rec.prompt_id = corpus[i].id;
    } else {
      rec = failed_record(corpus[i].id, p, error);
    }
    std::lock_guard lock(mu);
    results[slot] = std::move(rec);
    while (next < results.size() && results[next]) {
      stream << json(*results[next]).dump() << "\n";
      ++next;
    }
    stream.flush();
  });
  stream.close();

  std::vector<AttackRecord> all;
  std::string body;
  std::size_t slot = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto it = done.find(corpus[i].id);
    if (it != done.end()) {
      all.push_back(it->second);
    } else {
      all.push_back(*results[slot++]);
    }
    body += json(all.back()).dump() + "\n";
  }
  write_text(records_path, body);

  json summary = {{"schema_version", kReportSchemaVersion},
                  {"target", rt.target->name()},
                  {"seed", rt.cfg.seed},
                  {"prompts", corpus.size()},
                  {"resumed", corpus.size() - pending.size()}};
  std::size_t failed = 0;
  double queries = 0.0;
  for (const auto& rec : all) {
    if (rec.status == AttackRecord::Status::failed) ++failed;
    queries += static_cast<double>(rec.query_count);
  }
  summary["failed"] = failed;
  summary["total_queries"] = queries;
  if (!all.empty()) {
    const CorpusResult r = evaluate_corpus(all, *rt.target, eval_options(rt));
    json asr = json::object();
    for (const auto& [n, v] : r.asr) asr[std::to_string(n)] = v;
    summary["bpr"] = r.bpr;
    summary["asr"] = asr;
    summary["counted"] = r.counted;
    summary["bypass_indeterminate"] = r.bypass_indeterminate;
    summary["asr_indeterminate"] = r.asr_indeterminate;
    summary["sim_stats"] = r.sim_stats;
  } else {
    summary["bpr"] = nullptr;
    summary["asr"] = json::object();
  }
  if (!rt.cfg.deterministic) summary["timestamp"] = utc_timestamp();
  const std::string text = summary.dump(2) + "\n";
  write_text(dir / "attack_summary.json", text);
  out << text;
  if (failed) err << "warning: " << failed << " of " << corpus.size() << " prompts failed\n";
  return kOk;
}

int cmd_evaluate(const Runtime& rt, const std::string& records_file, std::ostream& out) {
  check_health(rt);
  const auto records = read_records(records_file, false);
  if (records.empty()) throw ConfigError("no attack records in '" + records_file + "'");
  const CorpusResult r = evaluate_corpus(records, *rt.target, eval_options(rt));
  const fs::path dir = out_dir(rt);
  write_text(dir / "report.json", json(r).dump(2) + "\n");
  std::ostringstream csv;
  write_csv(csv, r);
  write_text(dir / "report.csv", csv.str());
  std::ostringstream emb;
  write_embedding_export(emb, records, *rt.provider);
  write_text(dir / "embeddings.jsonl", emb.str());

  json asr = json::object();
  for (const auto& [n, v] : r.asr) asr[std::to_string(n)] = v;
  out << json{{"records", records.size()},
              {"bpr", r.bpr},
              {"asr", asr},
              {"counted", r.counted},
              {"failed_records", r.failed_records},
              {"sim_stats", r.sim_stats}}
             .dump(2)
      << "\n";
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Macaronic prompt red-teaming against a scoring target", "macrt"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "TOML or JSON run config (default: $MACRT_CONFIG)");
  app.add_option("--target", flags.target, "'sim' or a remote base URL, overrides the config");
  app.add_option("--jobs", flags.jobs, "worker threads (default: available parallelism)");
  app.add_option("--seed", flags.seed, "run seed, overrides the config");
  app.add_flag("--resume", flags.resume, "skip prompts already present in the records file");
  app.add_flag("--deterministic", flags.deterministic, "omit timestamps from outputs");
  app.add_option("--out", flags.out, "output directory, overrides the config");
  app.fallthrough();

  std::string prompt_file, headword, corpus_file, records_file;
  auto* identify_cmd = app.add_subcommand("identify", "annotate sensitive words, one prompt per line");
  identify_cmd->add_option("prompt-file", prompt_file)->required();
  auto* select_cmd = app.add_subcommand("select", "rank a headword's lexicon pool and keep the top k");
  select_cmd->add_option("headword", headword)->required();
  auto* attack_cmd = app.add_subcommand("attack", "optimize macaronic substitutes for every corpus prompt");
  attack_cmd->add_option("corpus", corpus_file, "prompt file (default: paths.corpus)");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "compute BPR, ASR-N and similarity reports");
  evaluate_cmd->add_option("records", records_file)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    const Runtime rt = build_runtime(resolve_config(flags));
    for (const auto& w : rt.warnings) err << "warning: " << w << "\n";
    if (identify_cmd->parsed()) return cmd_identify(rt, prompt_file, out, err);
    if (select_cmd->parsed()) return cmd_select(rt, headword, out);
    if (attack_cmd->parsed()) {
      if (corpus_file.empty()) corpus_file = rt.cfg.paths.corpus;
      if (corpus_file.empty()) throw ConfigError("no corpus given and paths.corpus is not set");
      return cmd_attack(rt, corpus_file, out, err);
    }
    return cmd_evaluate(rt, records_file, out);
  } catch (const TargetUnreachable& e) {
    err << "error: " << e.what() << "\n";
    return kTargetUnreachable;
  } catch (const TargetError& e) {
    err << "error: " << e.what() << "\n";
    return kTargetUnreachable;
  } catch (const InsufficientPoolError& e) {
    err << "error: " << e.what() << "\n";
    return kPrecondition;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const EmbeddingError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace macrt::cli
