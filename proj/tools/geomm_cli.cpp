// geomm command-line tool.
//
// Exit codes: 0 success, 1 usage error, 2 data error. Metrics go to stdout as
// key=value lines, diagnostics to stderr.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "geomm/bootstrap.hpp"
#include "geomm/dataio.hpp"
#include "geomm/error.hpp"
#include "geomm/log.hpp"
#include "geomm/pipelines.hpp"
#include "geomm/retrieval.hpp"

namespace {

using json = nlohmann::json;
using namespace geomm;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Everything needed to rerun a command.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string path;  // empty: print to stderr

  void write(double seconds, const std::string& started) const {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["inputs"] = json::array();
    for (const auto& in : inputs) {
      json e{{"path", in}};
      try {
        e["sha256"] = sha256_file(in);
      } catch (const DataError&) {
        e["sha256"] = nullptr;
      }
      j["inputs"].push_back(e);
    }
    j["outputs"] = outputs;
    j["started_at"] = started;
    j["seconds"] = seconds;
    j["threads"] = resolve_threads(0);
    if (path.empty()) {
      std::cerr << "manifest=" << j.dump() << '\n';
      return;
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest " + path);
    out << j.dump(2) << '\n';
  }
};

// Resolved value of every option of a subcommand, defaults included.
json resolved_options(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help" || name == "-h") continue;
    std::string key = opt->get_single_name();
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[key] = r.size() == 1 ? json(r.front()) : json(r);
    } else if (!opt->get_default_str().empty()) {
      j[key] = opt->get_default_str();
    } else {
      j[key] = nullptr;
    }
  }
  return j;
}

std::vector<double> parse_lambda_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--lambda: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("--lambda: empty list");
  return out;
}

Embeddings load_prepared(const std::string& path, std::size_t max_vocab, Preprocess scheme) {
  return preprocess(load_embeddings(path, max_vocab), scheme);
}

std::vector<WordPair> load_nonempty_dictionary(const std::string& path) {
  LoadedDictionary d = load_dictionary(path);
  if (d.pairs.empty())
    throw DataError(path + ": no word pairs parsed (" + std::to_string(d.skipped_lines.size()) + " malformed lines)");
  return std::move(d.pairs);
}

// --- shared option groups --------------------------------------------------

struct TrainFlags {
  std::string src_emb, tgt_emb, dict, out, manifest;
  std::string src_lang = "src", tgt_lang = "tgt";
  std::string lambda = "10,100,1000,10000";
  std::size_t max_vocab = 200000;
  std::string preprocess = "unit";
  double val_frac = 0.2;
  std::uint64_t seed = 0;
  int max_iter = 500;
  double grad_tol = 1e-6;
  std::string variant = "full";
  int csls_k = kDefaultCslsK;
  int threads = 0;
};

void add_common_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--out", f.out, "Output model file")->required();
  sub->add_option("--manifest", f.manifest, "Run manifest path (default: <out>.manifest.json)");
  sub->add_option("--lambda", f.lambda, "Regularization weight or comma-separated grid")->capture_default_str();
  sub->add_option("--max-vocab", f.max_vocab, "Most frequent words to load per language (0 = all)")
      ->capture_default_str();
  sub->add_option("--preprocess", f.preprocess, "Embedding preprocessing")
      ->check(CLI::IsMember({"unit", "unit_center_unit"}))
      ->capture_default_str();
  sub->add_option("--val-frac", f.val_frac, "Validation fraction for lambda selection")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  sub->add_option("--seed", f.seed, "Seed for data splits")->capture_default_str();
  sub->add_option("--max-iter", f.max_iter, "Solver iteration limit")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--grad-tol", f.grad_tol, "Relative gradient-norm tolerance")->capture_default_str();
  sub->add_option("--csls-k", f.csls_k, "CSLS neighbourhood size for validation")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--threads", f.threads, "Worker threads (0 = GEOMM_NUM_THREADS or all cores)")
      ->capture_default_str();
}

void add_bilingual_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--src-emb", f.src_emb, "Source embeddings (word2vec text)")->required();
  sub->add_option("--tgt-emb", f.tgt_emb, "Target embeddings (word2vec text)")->required();
  sub->add_option("--dict", f.dict, "Training dictionary")->required();
  sub->add_option("--src-lang,--src", f.src_lang, "Source language name")->capture_default_str();
  sub->add_option("--tgt-lang,--tgt", f.tgt_lang, "Target language name")->capture_default_str();
  add_common_train_flags(sub, f);
}

TrainConfig to_config(const TrainFlags& f) {
  TrainConfig c;
  c.lambdas = parse_lambda_list(f.lambda);
  c.validation_fraction = f.val_frac;
  c.solver.max_iters = f.max_iter;
  c.solver.grad_tol = f.grad_tol;
  c.preprocessing = parse_preprocess(f.preprocess);
  c.seed = f.seed;
  c.csls_k = f.csls_k;
  c.retrieval_vocab = static_cast<Index>(f.max_vocab);
  c.variant = parse_model_variant(f.variant);
  c.threads = f.threads;
  return c;
}

struct ModelFlags {
  std::string model, src_lang = "src", tgt_lang = "tgt", src_emb, tgt_emb;
  std::size_t max_vocab = 200000;
  std::string mode = "csls";
  std::string space = "latent";
  int csls_k = kDefaultCslsK;
};

void add_model_flags(CLI::App* sub, ModelFlags& f, bool retrieval) {
  sub->add_option("--model", f.model, "Model file")->required();
  sub->add_option("--src,--src-lang", f.src_lang, "Source language in the model")->capture_default_str();
  sub->add_option("--tgt,--tgt-lang", f.tgt_lang, "Target language in the model")->capture_default_str();
  sub->add_option("--src-emb", f.src_emb, "Source embeddings")->required();
  sub->add_option("--tgt-emb", f.tgt_emb, "Target embeddings")->required();
  sub->add_option("--max-vocab", f.max_vocab, "Most frequent words to load per language (0 = all)")
      ->capture_default_str();
  if (!retrieval) return;
  sub->add_option("--mode", f.mode, "Retrieval criterion")->check(CLI::IsMember({"csls", "nn"}))->capture_default_str();
  sub->add_option("--space", f.space, "Retrieval space")
      ->check(CLI::IsMember({"latent", "target", "target_space"}))
      ->capture_default_str();
  sub->add_option("--csls-k", f.csls_k, "CSLS neighbourhood size")->check(CLI::PositiveNumber)->capture_default_str();
}

struct LoadedModel {
  ModelFile file;
  Embeddings src, tgt;
};

LoadedModel load_model_and_embeddings(const ModelFlags& f) {
  LoadedModel m{load_model(f.model), {}, {}};
  m.file.params.index_of(f.src_lang);
  m.file.params.index_of(f.tgt_lang);
  m.src = load_prepared(f.src_emb, f.max_vocab, m.file.preprocessing);
  m.tgt = load_prepared(f.tgt_emb, f.max_vocab, m.file.preprocessing);
  if (m.src.dim() != m.file.params.dim() || m.tgt.dim() != m.file.params.dim())
    throw DataError("embedding dimension does not match the model dimension " + std::to_string(m.file.params.dim()));
  return m;
}

int effective_k(int k, const Embeddings& a, const Embeddings& b) {
  return static_cast<int>(std::min<Index>({static_cast<Index>(k), a.size(), b.size()}));
}

Translator model_translator(const LoadedModel& m, const ModelFlags& f) {
  const RetrievalMode mode = parse_retrieval_mode(f.mode);
  const int k = mode == RetrievalMode::csls ? effective_k(f.csls_k, m.src, m.tgt) : 0;
  return make_translator(m.file.params, f.src_lang, f.tgt_lang, m.src, m.tgt, parse_inference_space(f.space), k);
}

}  // namespace

int main(int argc, char** argv) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = utc_now();

  CLI::App app{"Cross-lingual embedding alignment with rotations and a shared metric"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "geomm 1.0");

  Manifest manifest;
  manifest.argv.assign(argv, argv + argc);

  // train
  TrainFlags train;
  CLI::App* cmd_train = app.add_subcommand("train", "Supervised bilingual training");
  add_bilingual_train_flags(cmd_train, train);
  cmd_train->add_option("--variant", train.variant, "Model variant")
      ->check(CLI::IsMember({"full", "unconstrained_w", "metric_only", "rotations_only", "regression_loss"}))
      ->capture_default_str();

  // train-multi
  TrainFlags multi;
  std::string pairs_file;
  CLI::App* cmd_multi = app.add_subcommand("train-multi", "Joint training over a language graph");
  cmd_multi->add_option("--pairs", pairs_file, "Edge file: lang_i lang_j emb_i emb_j dict per line")->required();
  add_common_train_flags(cmd_multi, multi);

  // bootstrap
  TrainFlags boot;
  BootstrapConfig boot_cfg;
  std::string boot_direction = "bidirectional";
  std::string boot_dict_out;
  CLI::App* cmd_boot = app.add_subcommand("bootstrap", "Semi-supervised training from a seed dictionary");
  add_bilingual_train_flags(cmd_boot, boot);
  cmd_boot->add_option("--vocab-cutoff", boot_cfg.vocab_cutoff, "Most frequent words used for induction")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_boot->add_option("--max-rounds", boot_cfg.max_rounds, "Round limit")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd_boot->add_option("--patience", boot_cfg.patience, "Rounds without improvement before stopping")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_boot->add_option("--direction", boot_direction, "Induction direction")
      ->check(CLI::IsMember({"forward", "backward", "bidirectional"}))
      ->capture_default_str();
  cmd_boot->add_flag("--mutual-best", boot_cfg.mutual_best, "Keep only mutual nearest pairs");
  cmd_boot->add_flag("--retune-lambda", boot_cfg.retune_lambda, "Re-select lambda every round");
  cmd_boot->add_option("--dict-out", boot_dict_out, "Write the best round's training dictionary here");

  // translate
  ModelFlags tr;
  std::size_t topk = 10;
  std::vector<std::string> words;
  CLI::App* cmd_translate = app.add_subcommand("translate", "Translate words (arguments or stdin)");
  add_model_flags(cmd_translate, tr, true);
  cmd_translate->add_option("--topk", topk, "Candidates per word")->check(CLI::PositiveNumber)->capture_default_str();
  cmd_translate->add_option("words", words, "Words to translate (default: read from stdin)");

  // evaluate-bli
  ModelFlags bli;
  std::string test_dict;
  CLI::App* cmd_bli = app.add_subcommand("evaluate-bli", "Precision@k on a test dictionary");
  add_model_flags(cmd_bli, bli, true);
  cmd_bli->add_option("--test-dict", test_dict, "Test dictionary")->required();

  // evaluate-sim
  ModelFlags sim;
  std::string sim_pairs;
  CLI::App* cmd_sim = app.add_subcommand("evaluate-sim", "Cross-lingual word similarity (Pearson)");
  add_model_flags(cmd_sim, sim, false);
  cmd_sim->add_option("--pairs-file", sim_pairs, "Scored word pairs: src tgt score")->required();

  // induce
  ModelFlags ind;
  std::string induce_out;
  Index induce_cutoff = 25000;
  std::string induce_direction = "bidirectional";
  bool induce_mutual = false;
  CLI::App* cmd_induce = app.add_subcommand("induce", "Induce a dictionary from a trained model");
  add_model_flags(cmd_induce, ind, true);
  cmd_induce->add_option("--out", induce_out, "Output dictionary")->required();
  cmd_induce->add_option("--vocab-cutoff", induce_cutoff, "Most frequent words used per side")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd_induce->add_option("--direction", induce_direction, "Induction direction")
      ->check(CLI::IsMember({"forward", "backward", "bidirectional"}))
      ->capture_default_str();
  cmd_induce->add_flag("--mutual-best", induce_mutual, "Keep only mutual nearest pairs");
  cmd_induce->add_option("--manifest", manifest.path, "Run manifest path (default: <out>.manifest.json)");

  // make-disjoint-pivot-dicts
  std::string dict1, dict2, out1, out2;
  std::uint64_t pivot_seed = 0;
  CLI::App* cmd_pivot =
      app.add_subcommand("make-disjoint-pivot-dicts", "Drop entries so two dictionaries share no pivot word");
  cmd_pivot->add_option("--dict1", dict1, "src-pivot dictionary")->required();
  cmd_pivot->add_option("--dict2", dict2, "pivot-tgt dictionary")->required();
  cmd_pivot->add_option("--out1", out1, "Output for dict1")->required();
  cmd_pivot->add_option("--out2", out2, "Output for dict2")->required();
  cmd_pivot->add_option("--seed", pivot_seed, "Seed for assigning shared pivot words")->capture_default_str();
  cmd_pivot->add_option("--manifest", manifest.path, "Run manifest path (default: <out1>.manifest.json)");

  for (CLI::App* sub : {cmd_translate, cmd_bli, cmd_sim})
    sub->add_option("--manifest", manifest.path, "Run manifest path (default: printed to stderr)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  manifest.command = sub->get_name();
  manifest.config = resolved_options(*sub);

  try {
    if (sub == cmd_train || sub == cmd_boot) {
      TrainFlags& f = sub == cmd_train ? train : boot;
      const TrainConfig config = to_config(f);
      config.validate();
      manifest.inputs = {f.src_emb, f.tgt_emb, f.dict};
      manifest.outputs = {f.out};
      manifest.path = f.manifest.empty() ? f.out + ".manifest.json" : f.manifest;
      const Embeddings src = load_prepared(f.src_emb, f.max_vocab, config.preprocessing);
      const Embeddings tgt = load_prepared(f.tgt_emb, f.max_vocab, config.preprocessing);
      const std::vector<WordPair> pairs = load_nonempty_dictionary(f.dict);
      GeommParams params = GeommParams::identity({f.src_lang, f.tgt_lang}, src.dim());
      if (sub == cmd_train) {
        TrainResult r = train_bilingual(src, tgt, pairs, config, f.src_lang, f.tgt_lang);
        std::cout << format_report(r.report);
        params = std::move(r.params);
      } else {
        boot_cfg.train = config;
        boot_cfg.validation_fraction = config.validation_fraction;
        boot_cfg.direction = parse_induction_direction(boot_direction);
        boot_cfg.on_round = [](const BootstrapRound& r) { std::cerr << format_round(r) << '\n'; };
        BootstrapResult r = bootstrap_train(src, tgt, pairs, boot_cfg, f.src_lang, f.tgt_lang);
        std::cout << format_report(r.report);
        if (!boot_dict_out.empty()) {
          save_dictionary(boot_dict_out, r.report.final_dictionary);
          manifest.outputs.push_back(boot_dict_out);
        }
        params = std::move(r.params);
      }
      save_model(f.out, {std::move(params), config.preprocessing, config.variant});
      std::cout << "model=" << f.out << '\n';
    } else if (sub == cmd_multi) {
      const TrainConfig config = to_config(multi);
      config.validate();
      manifest.inputs = {pairs_file};
      manifest.outputs = {multi.out};
      manifest.path = multi.manifest.empty() ? multi.out + ".manifest.json" : multi.manifest;
      std::ifstream in(pairs_file);
      if (!in) throw DataError("cannot open " + pairs_file);
      LanguageGraph graph;
      std::map<std::string, std::string> emb_path;
      std::string line;
      std::size_t line_no = 0;
      auto register_language = [&](const std::string& lang, const std::string& path) {
        auto [it, inserted] = emb_path.emplace(lang, path);
        if (!inserted) {
          if (it->second != path)
            throw DataError(pairs_file + ":" + std::to_string(line_no) + ": language " + lang +
                            " given two embedding files");
          return;
        }
        graph.languages.push_back(lang);
        graph.embeddings.emplace(lang, load_prepared(path, multi.max_vocab, config.preprocessing));
        manifest.inputs.push_back(path);
      };
      while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() != 5)
          throw DataError(pairs_file + ":" + std::to_string(line_no) +
                          ": expected 'lang_i lang_j emb_i emb_j dict', got " + std::to_string(tok.size()) +
                          " fields");
        register_language(tok[0], tok[2]);
        register_language(tok[1], tok[3]);
        manifest.inputs.push_back(tok[4]);
        graph.edges.push_back({tok[0], tok[1], load_nonempty_dictionary(tok[4])});
      }
      if (graph.edges.empty()) throw DataError(pairs_file + ": no edges");
      TrainResult r = train_multilingual(graph, config);
      std::cout << format_report(r.report);
      save_model(multi.out, {std::move(r.params), config.preprocessing, ModelVariant::full});
      std::cout << "model=" << multi.out << '\n';
    } else if (sub == cmd_translate) {
      manifest.inputs = {tr.model, tr.src_emb, tr.tgt_emb};
      const LoadedModel m = load_model_and_embeddings(tr);
      if (words.empty())
        for (std::string w; std::cin >> w;) words.push_back(w);
      const Translator translator = model_translator(m, tr);
      const auto results = translate(translator, words, topk, parse_retrieval_mode(tr.mode));
      std::size_t oov = 0;
      for (const auto& q : results) {
        if (!q.in_vocabulary) {
          std::cerr << "out of vocabulary: " << q.word << '\n';
          ++oov;
          continue;
        }
        for (std::size_t r = 0; r < q.candidates.size(); ++r)
          std::cout << q.word << '\t' << r + 1 << '\t' << q.candidates[r].word << '\t' << std::setprecision(6)
                    << q.candidates[r].score << '\n';
      }
      std::cerr << "translated=" << results.size() - oov << " oov=" << oov << '\n';
    } else if (sub == cmd_bli) {
      manifest.inputs = {bli.model, bli.src_emb, bli.tgt_emb, test_dict};
      const LoadedModel m = load_model_and_embeddings(bli);
      const std::vector<WordPair> test = load_nonempty_dictionary(test_dict);
      const Translator translator = model_translator(m, bli);
      std::cout << format_report(evaluate_bli(translator, test, parse_retrieval_mode(bli.mode)));
    } else if (sub == cmd_sim) {
      manifest.inputs = {sim.model, sim.src_emb, sim.tgt_emb, sim_pairs};
      const LoadedModel m = load_model_and_embeddings(sim);
      const auto pairs = load_scored_pairs(sim_pairs);
      std::cout << format_report(
          evaluate_word_similarity(m.file.params, sim.src_lang, sim.tgt_lang, m.src, m.tgt, pairs));
    } else if (sub == cmd_induce) {
      manifest.inputs = {ind.model, ind.src_emb, ind.tgt_emb};
      manifest.outputs = {induce_out};
      if (manifest.path.empty()) manifest.path = induce_out + ".manifest.json";
      const LoadedModel m = load_model_and_embeddings(ind);
      if (parse_inference_space(ind.space) != InferenceSpace::latent)
        throw UsageError("induce: only --space latent is supported");
      const auto pairs =
          induce_dictionary(m.file.params, ind.src_lang, ind.tgt_lang, m.src, m.tgt, induce_cutoff,
                            parse_induction_direction(induce_direction), ind.csls_k,
                            parse_retrieval_mode(ind.mode), induce_mutual);
      save_dictionary(induce_out, pairs);
      std::cout << "induced_pairs=" << pairs.size() << '\n';
    } else if (sub == cmd_pivot) {
      manifest.inputs = {dict1, dict2};
      manifest.outputs = {out1, out2};
      if (manifest.path.empty()) manifest.path = out1 + ".manifest.json";
      const auto d1 = load_nonempty_dictionary(dict1);
      const auto d2 = load_nonempty_dictionary(dict2);
      const DisjointPivotResult r = make_disjoint_pivot(d1, d2, pivot_seed);
      save_dictionary(out1, r.src_pvt);
      save_dictionary(out2, r.pvt_tgt);
      std::cout << "kept1=" << r.src_pvt.size() << '\n'
                << "dropped1=" << r.dropped_src_pvt << '\n'
                << "kept2=" << r.pvt_tgt.size() << '\n'
                << "dropped2=" << r.dropped_pvt_tgt << '\n';
    }
    manifest.write(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), started);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const PreconditionViolation& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const UnknownLanguage& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
