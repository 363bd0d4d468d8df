#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kws/checkpoint.hpp"
#include "kws/criterion.hpp"
#include "kws/data.hpp"
#include "kws/error.hpp"
#include "kws/kernels.hpp"
#include "kws/metrics.hpp"
#include "kws/trainer.hpp"

namespace {

using namespace kws;

std::vector<std::string> read_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word list: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

void print_config_line(const std::string& key, const std::string& value) {
  std::printf("config: %s=%s\n", key.c_str(), value.c_str());
}

std::unique_ptr<model::SpeechEmbedder> make_embedder(const std::string& embeddings,
                                                     uint64_t seed) {
  if (!embeddings.empty()) {
    return std::make_unique<model::FileEmbedder>(embeddings);
  }
  return std::make_unique<model::StubEmbedder>(seed);
}

int cmd_synth(const std::string& keywords_file, int per_keyword, uint64_t seed,
              const std::string& out_dir, const std::string& lexicon_path) {
  print_config_line("command", "synth-data");
  print_config_line("keywords", keywords_file);
  print_config_line("per_keyword", std::to_string(per_keyword));
  print_config_line("seed", std::to_string(seed));
  print_config_line("out", out_dir);
  print_config_line("lexicon", lexicon_path);

  const auto lex = g2p::Lexicon::load(lexicon_path);
  data::SynthSpec spec;
  spec.keywords = read_word_list(keywords_file);
  spec.utterances_per_keyword = per_keyword;
  spec.seed = seed;
  const std::string manifest = data::synth_dataset(spec, out_dir, lex);
  std::printf("wrote %s (%zu keywords x %d utterances)\n", manifest.c_str(),
              spec.keywords.size(), per_keyword);
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& lexicon_path, const std::string& out_dir,
              const std::string& embeddings, bool seed_set, uint64_t seed_override) {
  trainer::TrainConfig cfg = trainer::parse_train_config(config_path);
  if (seed_set) cfg.seed = seed_override;
  print_config_line("command", "train");
  print_config_line("manifest", manifest_path);
  print_config_line("lexicon", lexicon_path);
  print_config_line("out", out_dir);
  print_config_line("embeddings", embeddings.empty() ? "<stub>" : embeddings);
  print_config_line("kernel_backend", simd::backend_name(simd::active_backend()));
  std::istringstream ss(trainer::config_to_string(cfg));
  for (std::string line; std::getline(ss, line);) {
    if (!line.empty()) std::printf("config: %s\n", line.c_str());
  }

  const auto lex = g2p::Lexicon::load(lexicon_path);
  const auto entries = data::load_manifest(manifest_path);
  const auto embedder = make_embedder(embeddings, cfg.seed);

  std::unique_ptr<data::NoiseAugment> augment;
  if (!cfg.noise_manifest.empty()) {
    augment = std::make_unique<data::NoiseAugment>();
    augment->noise = data::load_manifest(cfg.noise_manifest);
    augment->snr_min = cfg.noise_snr_min;
    augment->snr_max = cfg.noise_snr_max;
    augment->seed = cfg.seed;
  }
  const auto dataset = data::load_dataset(entries, lex, *embedder, augment.get());
  const auto trials =
      data::build_training_pairs(entries, cfg.negatives_per_anchor, cfg.seed, lex);
  std::printf("loaded %zu utterances, %zu trials\n", dataset.utterances.size(),
              trials.size());

  model::Model<float> m(cfg.model_config());
  std::printf("trainable parameters: %lld\n",
              static_cast<long long>(m.count_parameters()));
  const auto report = trainer::train(m, dataset, trials, lex, cfg, out_dir);

  const std::string report_path = out_dir + "/report.json";
  std::ofstream out(report_path);
  out << trainer::report_to_json(report).dump(2) << "\n";
  for (const auto& e : report.epochs) {
    std::printf("epoch %3d  total %.6f  utt %.6f  phon %.6f", e.epoch, e.total, e.utt,
                e.phon);
    if (e.val_eer >= 0) std::printf("  val_eer %.4f  val_auc %.4f", e.val_eer, e.val_auc);
    std::printf("\n");
  }
  std::printf("best checkpoint: %s (epoch %d)\n", report.best_checkpoint.c_str(),
              report.best_epoch);
  std::printf("report: %s\n", report_path.c_str());
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& manifest_path,
                 const std::string& vocab_path, const std::string& lexicon_path,
                 const std::string& scores_path, const std::string& report_path,
                 int bins, const std::string& embeddings) {
  print_config_line("command", "evaluate");
  print_config_line("checkpoint", checkpoint_path);
  print_config_line("manifest", manifest_path);
  print_config_line("vocab", vocab_path);
  print_config_line("lexicon", lexicon_path);
  print_config_line("scores", scores_path);
  print_config_line("report", report_path);
  print_config_line("bins", std::to_string(bins));
  print_config_line("embeddings", embeddings.empty() ? "<stub>" : embeddings);

  const auto cfg = checkpoint::peek_config(checkpoint_path);
  model::Model<float> m(cfg);
  checkpoint::load(checkpoint_path, m);

  const auto lex = g2p::Lexicon::load(lexicon_path);
  const auto entries = data::load_manifest(manifest_path);
  const auto embedder = make_embedder(embeddings, cfg.seed);
  const auto dataset = data::load_dataset(entries, lex, *embedder);
  const auto vocab = read_word_list(vocab_path);
  const auto trials = data::build_closed_vocab_trials(entries, vocab, lex);

  const auto scores = trainer::score_trials(m, dataset, trials, lex);
  std::vector<metrics::ScoredTrial> scored(trials.size());
  for (size_t i = 0; i < trials.size(); ++i) scored[i] = {trials[i], scores[i]};

  metrics::write_scores_csv(scores_path, scored);
  const auto report = metrics::report_json(scored, bins);
  std::ofstream out(report_path);
  if (!out) throw Error("cannot write report: " + report_path);
  out << report.dump(2) << "\n";
  std::printf("trials: %zu  eer: %.4f  auc: %.4f  accuracy@0.8: %.4f\n", trials.size(),
              report["eer"].get<double>(), report["auc"].get<double>(),
              report["accuracy"].get<double>());
  std::printf("scores: %s\nreport: %s\n", scores_path.c_str(), report_path.c_str());
  return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& audio_path,
              const std::string& keyword, const std::string& lexicon_path,
              const std::string& embeddings) {
  print_config_line("command", "infer");
  print_config_line("checkpoint", checkpoint_path);
  print_config_line("audio", audio_path);
  print_config_line("keyword", keyword);
  print_config_line("lexicon", lexicon_path);
  print_config_line("embeddings", embeddings.empty() ? "<stub>" : embeddings);

  const auto cfg = checkpoint::peek_config(checkpoint_path);
  model::Model<float> m(cfg);
  checkpoint::load(checkpoint_path, m);

  const auto lex = g2p::Lexicon::load(lexicon_path);
  const auto w = audio::read_wav(audio_path);
  const auto embedder = make_embedder(embeddings, cfg.seed);

  bool oov = false;
  const auto phonemes = g2p::convert(keyword, lex, &oov);
  if (oov) std::printf("note: keyword is out of lexicon; letter-to-sound fallback used\n");

  model::Model<float>::ItemInput item;
  item.mel = audio::compute_log_mel(w);
  item.pre_emb = embedder->embed(w, "infer");
  item.phonemes = phonemes.ids;

  nn::Tape<float> tape;
  const auto nodes = m.forward(tape, {item}, /*train=*/false);
  std::printf("P_utt = %.6f\n", tape.val(nodes[0].p_utt).data[0]);
  if (nodes[0].p_phon >= 0) {
    std::printf("P_phon:\n");
    const auto& pp = tape.val(nodes[0].p_phon);
    for (size_t i = 0; i < phonemes.ids.size(); ++i) {
      std::printf("  %-4s %.6f\n", g2p::phoneme_symbol(phonemes.ids[i]), pp.data[i]);
    }
  }
  return 0;
}

int cmd_report(const std::string& scores_path, int bins, const std::string& out_path) {
  print_config_line("command", "report");
  print_config_line("scores", scores_path);
  print_config_line("bins", std::to_string(bins));
  print_config_line("out", out_path.empty() ? "<stdout>" : out_path);

  const auto scored = metrics::read_scores_csv(scores_path);
  const auto report = metrics::report_json(scored, bins);
  if (out_path.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw Error("cannot write report: " + out_path);
    out << report.dump(2) << "\n";
    std::printf("report: %s\n", out_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phoneme-guided zero-shot keyword spotting"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "render a synthetic keyword corpus");
  std::string s_keywords, s_out, s_lexicon;
  int s_per = 10;
  uint64_t s_seed = 1;
  synth->add_option("--keywords", s_keywords, "keyword list, one per line")->required();
  synth->add_option("--per-keyword", s_per, "utterances per keyword")->required();
  synth->add_option("--seed", s_seed, "generator seed");
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--lexicon", s_lexicon, "pronunciation lexicon")->required();

  auto* train = app.add_subcommand("train", "train a detector");
  std::string t_config, t_manifest, t_lexicon, t_out, t_embeddings;
  uint64_t t_seed = 0;
  bool t_seed_set = false;
  train->add_option("--config", t_config, "key=value training config")->required();
  train->add_option("--manifest", t_manifest, "JSON-lines dataset manifest")->required();
  train->add_option("--lexicon", t_lexicon, "pronunciation lexicon")->required();
  train->add_option("--out", t_out, "output directory")->required();
  train->add_option("--embeddings", t_embeddings,
                    "precomputed speech-embedding manifest (default: stub embedder)");
  train
      ->add_option("--seed", t_seed, "override the config seed")
      ->each([&t_seed_set](const std::string&) { t_seed_set = true; });

  auto* eval = app.add_subcommand("evaluate", "score closed-vocabulary trials");
  std::string e_ckpt, e_manifest, e_vocab, e_lexicon, e_scores, e_report, e_embeddings;
  int e_bins = 20;
  eval->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
  eval->add_option("--manifest", e_manifest, "JSON-lines dataset manifest")->required();
  eval->add_option("--vocab", e_vocab, "candidate keywords, one per line")->required();
  eval->add_option("--lexicon", e_lexicon, "pronunciation lexicon")->required();
  eval->add_option("--scores", e_scores, "output scores CSV")->required();
  eval->add_option("--report", e_report, "output metrics JSON")->required();
  eval->add_option("--bins", e_bins, "distance bins for the MSE table");
  eval->add_option("--embeddings", e_embeddings,
                   "precomputed speech-embedding manifest (default: stub embedder)");

  auto* infer = app.add_subcommand("infer", "score one audio/keyword pair");
  std::string i_ckpt, i_audio, i_keyword, i_lexicon, i_embeddings;
  infer->add_option("--checkpoint", i_ckpt, "model checkpoint")->required();
  infer->add_option("--audio", i_audio, "16 kHz mono PCM16 WAV")->required();
  infer->add_option("--keyword", i_keyword, "keyword text")->required();
  infer->add_option("--lexicon", i_lexicon, "pronunciation lexicon")->required();
  infer->add_option("--embeddings", i_embeddings,
                    "precomputed speech-embedding manifest (default: stub embedder)");

  auto* rep = app.add_subcommand("report", "metrics JSON from a scores CSV");
  std::string r_scores, r_out;
  int r_bins = 20;
  rep->add_option("--scores", r_scores, "scores CSV from evaluate")->required();
  rep->add_option("--bins", r_bins, "distance bins for the MSE table");
  rep->add_option("--out", r_out, "output JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(s_keywords, s_per, s_seed, s_out, s_lexicon);
    if (train->parsed()) {
      return cmd_train(t_config, t_manifest, t_lexicon, t_out, t_embeddings, t_seed_set,
                       t_seed);
    }
    if (eval->parsed()) {
      return cmd_evaluate(e_ckpt, e_manifest, e_vocab, e_lexicon, e_scores, e_report,
                          e_bins, e_embeddings);
    }
    if (infer->parsed()) {
      return cmd_infer(i_ckpt, i_audio, i_keyword, i_lexicon, i_embeddings);
    }
    if (rep->parsed()) return cmd_report(r_scores, r_bins, r_out);
  } catch (const kws::NumericError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 3;
  } catch (const kws::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
