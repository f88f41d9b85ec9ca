// mlta: group-level emotion analysis over multi-layer tweet graphs.
//
// Subcommands cover the full pipeline: synthetic corpus generation,
// preprocessing, graph construction, training, evaluation, the convolution
// ablation, the 2-tweet sentiment baseline, and a gradient self-check.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mlta/embedding.hpp"
#include "mlta/evaluation.hpp"
#include "mlta/gnn.hpp"
#include "mlta/labels.hpp"
#include "mlta/mln.hpp"
#include "mlta/preprocess.hpp"
#include "mlta/synthetic.hpp"
#include "mlta/training.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct TableArgs {
    std::string contractions_path;
    std::string emoji_path;

    mlta::ContractionTable contractions() const {
        return contractions_path.empty() ? mlta::default_contractions()
                                         : mlta::ContractionTable::load(contractions_path);
    }
    mlta::EmojiAliasTable emoji() const {
        return emoji_path.empty() ? mlta::default_emoji_aliases()
                                  : mlta::EmojiAliasTable::load(emoji_path);
    }
};

struct EmbeddingArgs {
    std::string primary_path;
    std::string fallback_path;

    mlta::EmbeddingTable primary() const { return mlta::EmbeddingTable::load(primary_path, "primary"); }
    mlta::EmbeddingTable fallback() const {
        return fallback_path.empty() ? mlta::EmbeddingTable()
                                     : mlta::EmbeddingTable::load(fallback_path, "fallback");
    }
};

void add_table_flags(CLI::App* cmd, TableArgs& args) {
    cmd->add_option("--contractions", args.contractions_path,
                    "contraction table TSV (form<TAB>expansion); built-in table if omitted");
    cmd->add_option("--emoji", args.emoji_path,
                    "emoji alias table TSV (emoji<TAB>alias); built-in table if omitted");
}

struct ModelFlags {
    std::string conv = "graphconv";
    int heads = 5;
    int hidden = 128;
    int fc1 = 128;
    int fc2 = 64;
    std::string pool = "mean";
    std::string readout = "concat";
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
    cmd->add_option("--conv", flags.conv, "convolution operator: gcn, gatv2, graphconv")
        ->default_val(flags.conv);
    cmd->add_option("--heads", flags.heads, "attention heads (gatv2)")->default_val(flags.heads);
    cmd->add_option("--hidden", flags.hidden, "convolution output width (input width 300 comes from the embeddings; defaults reduce to 128)")
        ->default_val(flags.hidden);
    cmd->add_option("--fc1", flags.fc1, "first fully-connected width")->default_val(flags.fc1);
    cmd->add_option("--fc2", flags.fc2, "second fully-connected width")->default_val(flags.fc2);
    cmd->add_option("--pool", flags.pool, "readout pooling: mean (default) or maxabs")
        ->default_val(flags.pool);
    cmd->add_option("--readout", flags.readout, "branch combination: concat (default) or sum")
        ->default_val(flags.readout);
}

mlta::TrainConfig to_train_config(const ModelFlags& model, double lr, int epochs, int batch,
                                  double dropout, std::uint64_t seed, double split,
                                  const std::string& class_weights, double target_f1) {
    mlta::TrainConfig config;
    config.learning_rate = lr;
    config.epochs = epochs;
    config.batch_size = batch;
    config.dropout = dropout;
    config.seed = seed;
    config.split_fraction = split;
    config.conv = mlta::parse_conv_type(model.conv);
    config.heads = model.heads;
    config.dims.hidden = model.hidden;
    config.dims.fc1 = model.fc1;
    config.dims.fc2 = model.fc2;
    config.pool = mlta::parse_pool_kind(model.pool);
    config.readout = mlta::parse_readout_kind(model.readout);
    config.stop_at_test_f1 = target_f1;
    if (!class_weights.empty()) {
        std::istringstream ss(class_weights);
        std::string item;
        while (std::getline(ss, item, ',')) config.class_weights.push_back(std::stod(item));
        if (config.class_weights.size() != mlta::kNumClasses)
            throw mlta::ParseError("--class-weights needs exactly 6 comma-separated values");
    }
    return config;
}

// Cleans a corpus, dropping tweets that clean to nothing (count logged).
std::vector<mlta::CleanTweet> clean_corpus(const std::vector<mlta::RawTweet>& tweets,
                                           const mlta::ContractionTable& contractions,
                                           const mlta::EmojiAliasTable& emoji) {
    std::vector<mlta::CleanTweet> cleaned;
    cleaned.reserve(tweets.size());
    int dropped = 0;
    for (const mlta::RawTweet& t : tweets) {
        try {
            cleaned.push_back(mlta::clean(t, contractions, emoji));
        } catch (const mlta::EmptyAfterCleaning&) {
            ++dropped;
        }
    }
    if (dropped > 0) std::cerr << "dropped " << dropped << " tweet(s) empty after cleaning\n";
    return cleaned;
}

std::vector<mlta::RawTweet> maybe_filter(std::vector<mlta::RawTweet> tweets,
                                         const std::string& predictions_path) {
    if (predictions_path.empty()) return tweets;
    const auto predictions = mlta::read_predictions(predictions_path);
    auto kept = mlta::filter_by_sentiment(tweets, predictions);
    std::cerr << "sentiment filter kept " << kept.size() << " of " << tweets.size()
              << " tweet(s)\n";
    return kept;
}

int run_gen_synth(const std::string& out_path, const std::string& embeddings_out, int dim,
                  mlta::GenConfig config) {
    const auto tweets = mlta::generate(config);
    mlta::write_corpus_jsonl(out_path, tweets);
    std::cerr << "wrote " << tweets.size() << " tweets to " << out_path << '\n';
    if (!embeddings_out.empty()) {
        mlta::write_synthetic_embeddings(embeddings_out, config, dim);
        std::cerr << "wrote " << mlta::synthetic_vocabulary(config).size() << " vectors to "
                  << embeddings_out << '\n';
    }
    return kExitOk;
}

int run_preprocess(const std::string& corpus_path, const std::string& out_path,
                   const TableArgs& tables, const std::string& predictions_path) {
    auto tweets = maybe_filter(mlta::read_corpus_jsonl(corpus_path), predictions_path);
    const auto contractions = tables.contractions();
    const auto emoji = tables.emoji();
    const auto cleaned = clean_corpus(tweets, contractions, emoji);
    std::vector<mlta::RawTweet> out;
    out.reserve(cleaned.size());
    for (const mlta::CleanTweet& t : cleaned) out.push_back(mlta::RawTweet{t.raw_text, t.label});
    mlta::write_corpus_jsonl(out_path, out);
    std::cerr << "wrote " << out.size() << " cleaned tweet(s) to " << out_path << '\n';
    return kExitOk;
}

int run_build_graphs(const std::string& corpus_path, const std::string& out_path, int group_size,
                     const TableArgs& tables, const EmbeddingArgs& embeddings,
                     const std::string& predictions_path, std::uint64_t seed) {
    if (group_size < 1) throw mlta::Error("--group-size must be at least 1");
    auto tweets = maybe_filter(mlta::read_corpus_jsonl(corpus_path), predictions_path);
    const auto contractions = tables.contractions();
    const auto emoji = tables.emoji();
    auto cleaned = clean_corpus(tweets, contractions, emoji);

    if (!embeddings.primary_path.empty()) {
        const auto primary = embeddings.primary();
        const auto fallback = embeddings.fallback();
        const auto in_vocab = [&](std::string_view w) {
            return primary.contains(w) || fallback.contains(w);
        };
        for (mlta::CleanTweet& t : cleaned) mlta::segment_hashtags(t, in_vocab);
    }

    std::map<mlta::EmotionLabel, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < cleaned.size(); ++i) by_class[cleaned[i].label].push_back(i);

    std::vector<mlta::TweetMln> mlns;
    int leftover = 0;
    for (auto& [label, indices] : by_class) {
        mlta::Rng rng(mlta::mix_seed(seed, static_cast<std::uint64_t>(label)));
        rng.shuffle(indices);
        std::size_t full_groups = indices.size() / group_size;
        leftover += static_cast<int>(indices.size() - full_groups * group_size);
        for (std::size_t g = 0; g < full_groups; ++g) {
            std::vector<mlta::CleanTweet> group;
            group.reserve(group_size);
            for (int k = 0; k < group_size; ++k)
                group.push_back(cleaned[indices[g * group_size + k]]);
            mlns.push_back(mlta::build_mln(group));
        }
    }
    if (leftover > 0)
        std::cerr << "dropped " << leftover << " tweet(s) not filling a full group of "
                  << group_size << '\n';
    mlta::write_mlns(out_path, mlns);
    std::cerr << "wrote " << mlns.size() << " graph(s) to " << out_path << '\n';
    return kExitOk;
}

std::string default_history_path(const std::string& checkpoint_path) {
    const auto dot = checkpoint_path.rfind('.');
    const auto slash = checkpoint_path.find_last_of("/\\");
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    return (has_ext ? checkpoint_path.substr(0, dot) : checkpoint_path) + ".history.csv";
}

int run_train(const std::string& graphs_path, const EmbeddingArgs& embeddings,
              const mlta::TrainConfig& config, const std::string& checkpoint_path,
              std::string history_path) {
    const auto primary = embeddings.primary();
    const auto fallback = embeddings.fallback();
    const auto mlns = mlta::read_mlns(graphs_path);
    const auto featurized = mlta::featurize_all(mlns, primary, fallback);
    auto [train_set, test_set] = mlta::split(featurized, config.split_fraction, config.seed);
    std::cerr << "training on " << train_set.size() << " / testing on " << test_set.size()
              << " graph(s)\n";
    mlta::TrainResult result = mlta::train(train_set, test_set, config);
    mlta::save_checkpoint(checkpoint_path, result.params);
    if (history_path.empty()) history_path = default_history_path(checkpoint_path);
    mlta::write_history_csv(history_path, result.history);
    std::cerr << "best test macro-F1 " << result.best_test_f1 << " at epoch " << result.best_epoch
              << "; checkpoint " << checkpoint_path << "; history " << history_path << '\n';
    return kExitOk;
}

int run_evaluate(const std::string& graphs_path, const EmbeddingArgs& embeddings,
                 const std::string& checkpoint_path, const std::string& json_path, int batch) {
    const auto primary = embeddings.primary();
    const auto fallback = embeddings.fallback();
    mlta::ModelParams params = mlta::load_checkpoint(checkpoint_path);
    const auto featurized = mlta::featurize_all(mlta::read_mlns(graphs_path), primary, fallback);
    if (featurized.empty()) throw mlta::TooFewSamples("no graphs to evaluate");
    const mlta::MetricsReport report = mlta::evaluate(params, featurized, batch);
    std::vector<std::string> names;
    for (int i = 0; i < mlta::kNumClasses; ++i)
        names.push_back(mlta::to_string(static_cast<mlta::EmotionLabel>(i)));
    mlta::print_metrics(std::cout, report, names);
    if (!json_path.empty()) {
        std::vector<int> truth;
        for (const auto& m : featurized) truth.push_back(m.label);
        const auto preds = mlta::predict(params, featurized, batch);
        nlohmann::json j{{"metrics", mlta::to_json(report)},
                         {"confusion", mlta::to_json(mlta::ConfusionMatrix::from_predictions(
                                           truth, preds, params.dims.classes))}};
        std::ofstream out(json_path);
        if (!out) throw mlta::IoError("cannot write report " + json_path);
        out << j.dump(2) << '\n';
    }
    return kExitOk;
}

int run_ablate(const std::string& graphs_path, const EmbeddingArgs& embeddings,
               const mlta::TrainConfig& base_config, const std::string& json_path) {
    const auto primary = embeddings.primary();
    const auto fallback = embeddings.fallback();
    const auto featurized = mlta::featurize_all(mlta::read_mlns(graphs_path), primary, fallback);
    auto [train_set, test_set] = mlta::split(featurized, base_config.split_fraction, base_config.seed);
    const auto rows = mlta::ablation(train_set, test_set, base_config);
    mlta::print_ablation(std::cout, rows);
    if (!json_path.empty()) {
        std::ofstream out(json_path);
        if (!out) throw mlta::IoError("cannot write report " + json_path);
        out << mlta::to_json(rows).dump(2) << '\n';
    }
    return kExitOk;
}

int run_pair_baseline(const std::string& graphs_path, const EmbeddingArgs& embeddings,
                      const std::string& checkpoint_path,
                      const std::vector<std::string>& external_specs,
                      const std::string& json_path, int batch) {
    const auto primary = embeddings.primary();
    const auto fallback = embeddings.fallback();
    mlta::ModelParams params = mlta::load_checkpoint(checkpoint_path);
    const auto pairs = mlta::featurize_all(mlta::read_mlns(graphs_path), primary, fallback);
    std::vector<std::pair<std::string, std::vector<mlta::Sentiment>>> external;
    for (const std::string& spec : external_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
            throw mlta::ParseError("--external expects name=path, got '" + spec + "'");
        external.emplace_back(spec.substr(0, eq), mlta::read_predictions(spec.substr(eq + 1)));
    }
    const auto rows = mlta::pair_baseline(pairs, params, external, batch);
    mlta::print_pair_baseline(std::cout, rows);
    if (!json_path.empty()) {
        std::ofstream out(json_path);
        if (!out) throw mlta::IoError("cannot write report " + json_path);
        out << mlta::to_json(rows).dump(2) << '\n';
    }
    return kExitOk;
}

// Builds a small in-memory batch of toy MLNs and checks full-model gradients
// against central finite differences.
int run_grad_check(const std::string& conv_spec, double epsilon, double tolerance,
                   std::uint64_t seed) {
    mlta::GenConfig gen;
    gen.tweets_per_class = 3;
    gen.vocab_per_class = 6;
    gen.shared_vocab = 4;
    gen.hashtag_rate = 0.7;
    gen.noise_rate = 0.2;
    gen.seed = seed;
    const auto tweets = mlta::generate(gen);

    const auto contractions = mlta::default_contractions();
    const auto emoji = mlta::default_emoji_aliases();
    const int dim = 6;
    mlta::EmbeddingTable table("toy", dim);
    for (const std::string& token : mlta::synthetic_vocabulary(gen)) {
        mlta::Rng rng(mlta::mix_seed(seed, mlta::fnv1a64(token)));
        std::vector<double> v(dim);
        for (double& x : v) x = rng.uniform(-1.0, 1.0);
        table.insert(token, v);
    }
    mlta::EmbeddingTable fallback;

    std::vector<mlta::FeaturizedMln> toy;
    for (int cls = 0; cls < 3; ++cls) {
        std::vector<mlta::CleanTweet> group;
        for (int t = 0; t < 3; ++t)
            group.push_back(mlta::clean(tweets[cls * gen.tweets_per_class + t], contractions, emoji));
        toy.push_back(mlta::featurize_mln(mlta::build_mln(group), table, fallback));
    }
    std::vector<std::size_t> members{0, 1, 2};
    const mlta::GraphBatch batch = mlta::make_batch(toy, members);

    std::vector<mlta::ConvType> kinds;
    if (conv_spec == "all") {
        kinds = {mlta::ConvType::Gcn, mlta::ConvType::GatV2, mlta::ConvType::GraphConv};
    } else {
        kinds = {mlta::parse_conv_type(conv_spec)};
    }

    bool ok = true;
    for (mlta::ConvType conv : kinds) {
        mlta::ModelDims dims;
        dims.f_in = dim;
        dims.hidden = 5;
        dims.fc1 = 7;
        dims.fc2 = 5;
        mlta::ModelParams params = mlta::ModelParams::init(conv, dims, seed, /*heads=*/3);
        auto build = [&](mlta::Tape& tape) {
            mlta::Value logits = mlta::forward(tape, batch, params, /*training=*/true, 0.5,
                                               mlta::mix_seed(seed, 0xd0));
            return mlta::cross_entropy(tape, logits, batch.labels);
        };
        const auto report = mlta::grad_check(build, params.parameters(), epsilon, tolerance);
        const bool pass = report.passed(tolerance);
        ok = ok && pass;
        std::cout << to_string(conv) << ": max relative error " << report.max_rel_error << " ("
                  << (pass ? "ok" : "FAIL") << ", tolerance " << tolerance << ")\n";
    }
    return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mlta: group-level emotion analysis over multi-layer tweet graphs"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "flag file: key=value lines, keys dotted as subcommand.flag "
                   "(or [subcommand] sections); command-line flags take precedence");

    // gen-synth
    auto* gen_cmd = app.add_subcommand("gen-synth", "generate a synthetic labeled corpus");
    std::string gen_out, gen_emb_out;
    int gen_dim = 300;
    mlta::GenConfig gen_config;
    gen_cmd->add_option("--out", gen_out, "output corpus (jsonl)")->required();
    gen_cmd->add_option("--embeddings-out", gen_emb_out, "companion embedding table (text)");
    gen_cmd->add_option("--dim", gen_dim, "embedding dimension")->default_val(gen_dim);
    gen_cmd->add_option("--tweets-per-class", gen_config.tweets_per_class, "corpus size per class")->default_val(gen_config.tweets_per_class);
    gen_cmd->add_option("--vocab-per-class", gen_config.vocab_per_class, "class-specific vocabulary size")->default_val(gen_config.vocab_per_class);
    gen_cmd->add_option("--shared-vocab", gen_config.shared_vocab, "vocabulary shared by all classes")->default_val(gen_config.shared_vocab);
    gen_cmd->add_option("--hashtag-rate", gen_config.hashtag_rate, "probability a tweet carries a hashtag")->default_val(gen_config.hashtag_rate);
    gen_cmd->add_option("--noise-rate", gen_config.noise_rate,
                        "probability a token comes from another class's vocabulary")
        ->default_val(gen_config.noise_rate);
    gen_cmd->add_option("--seed", gen_config.seed, "generator seed")->default_val(gen_config.seed);

    // preprocess
    auto* pre_cmd = app.add_subcommand("preprocess", "clean a corpus and write it back out");
    std::string pre_corpus, pre_out, pre_preds;
    TableArgs pre_tables;
    pre_cmd->add_option("--corpus", pre_corpus, "input corpus (jsonl)")->required();
    pre_cmd->add_option("--out", pre_out, "cleaned corpus (jsonl)")->required();
    pre_cmd->add_option("--predictions", pre_preds,
                        "sentiment predictions file (one of positive/negative/neutral per line)");
    add_table_flags(pre_cmd, pre_tables);

    // build-graphs
    auto* build_cmd = app.add_subcommand("build-graphs", "group tweets and build tweet graphs");
    std::string build_corpus, build_out, build_preds;
    int group_size = 300;
    std::uint64_t build_seed = 0;
    TableArgs build_tables;
    EmbeddingArgs build_embeddings;
    build_cmd->add_option("--corpus", build_corpus, "input corpus (jsonl)")->required();
    build_cmd->add_option("--out", build_out, "output graphs (jsonl)")->required();
    build_cmd->add_option("--group-size", group_size, "tweets per graph")->default_val(group_size);
    build_cmd->add_option("--embeddings", build_embeddings.primary_path,
                          "embedding table; its vocabulary drives hashtag segmentation");
    build_cmd->add_option("--fallback", build_embeddings.fallback_path, "fallback embedding table");
    build_cmd->add_option("--predictions", build_preds, "sentiment predictions file for filtering");
    build_cmd->add_option("--seed", build_seed, "within-class shuffle seed")->default_val(build_seed);
    add_table_flags(build_cmd, build_tables);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on built graphs");
    std::string train_graphs, train_ckpt, train_history, train_class_weights;
    EmbeddingArgs train_embeddings;
    ModelFlags train_model;
    double train_lr = 0.001, train_dropout = 0.5, train_split = 0.8, train_target_f1 = -1.0;
    int train_epochs = 100, train_batch = 32;
    std::uint64_t train_seed = 0;
    train_cmd->add_option("--graphs", train_graphs, "graphs file (jsonl)")->required();
    train_cmd->add_option("--embeddings", train_embeddings.primary_path, "primary embedding table")
        ->required();
    train_cmd->add_option("--fallback", train_embeddings.fallback_path, "fallback embedding table");
    train_cmd->add_option("--out", train_ckpt, "checkpoint output (json)")->required();
    train_cmd->add_option("--history", train_history,
                          "learning history CSV (default: derived from --out)");
    train_cmd->add_option("--lr", train_lr, "learning rate")->default_val(train_lr);
    train_cmd->add_option("--epochs", train_epochs, "training epochs")->default_val(train_epochs);
    train_cmd->add_option("--batch", train_batch, "mini-batch size")->default_val(train_batch);
    train_cmd->add_option("--dropout", train_dropout, "dropout rate after the last convolution")->default_val(train_dropout);
    train_cmd->add_option("--seed", train_seed, "seed for split, shuffles, init, and dropout")->default_val(train_seed);
    train_cmd->add_option("--split", train_split, "train fraction of the 80-20 style split")
        ->default_val(train_split);
    train_cmd->add_option("--class-weights", train_class_weights,
                          "six comma-separated cross-entropy class weights");
    train_cmd->add_option("--target-f1", train_target_f1,
                          "stop once test macro-F1 reaches this value (off when negative)")
        ->default_val(train_target_f1);
    add_model_flags(train_cmd, train_model);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score a checkpoint on built graphs");
    std::string eval_graphs, eval_ckpt, eval_json;
    EmbeddingArgs eval_embeddings;
    int eval_batch = 32;
    eval_cmd->add_option("--graphs", eval_graphs, "graphs file (jsonl)")->required();
    eval_cmd->add_option("--embeddings", eval_embeddings.primary_path, "primary embedding table")->required();
    eval_cmd->add_option("--fallback", eval_embeddings.fallback_path, "fallback embedding table");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint (json)")->required();
    eval_cmd->add_option("--json", eval_json, "write the machine-readable report here");
    eval_cmd->add_option("--batch", eval_batch, "evaluation batch size")->default_val(eval_batch);

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "train all three convolutions and compare");
    std::string ablate_graphs, ablate_json, ablate_class_weights;
    EmbeddingArgs ablate_embeddings;
    ModelFlags ablate_model;
    double ablate_lr = 0.001, ablate_dropout = 0.5, ablate_split = 0.8;
    int ablate_epochs = 100, ablate_batch = 32;
    std::uint64_t ablate_seed = 0;
    ablate_cmd->add_option("--graphs", ablate_graphs, "graphs file (jsonl)")->required();
    ablate_cmd->add_option("--embeddings", ablate_embeddings.primary_path, "primary embedding table")->required();
    ablate_cmd->add_option("--fallback", ablate_embeddings.fallback_path, "fallback embedding table");
    ablate_cmd->add_option("--json", ablate_json, "write the machine-readable table here");
    ablate_cmd->add_option("--lr", ablate_lr, "learning rate")->default_val(ablate_lr);
    ablate_cmd->add_option("--epochs", ablate_epochs, "training epochs per convolution")->default_val(ablate_epochs);
    ablate_cmd->add_option("--batch", ablate_batch, "mini-batch size")->default_val(ablate_batch);
    ablate_cmd->add_option("--dropout", ablate_dropout, "dropout rate after the last convolution")->default_val(ablate_dropout);
    ablate_cmd->add_option("--seed", ablate_seed, "seed shared by all three runs")->default_val(ablate_seed);
    ablate_cmd->add_option("--split", ablate_split, "train fraction of the 80-20 style split")->default_val(ablate_split);
    add_model_flags(ablate_cmd, ablate_model);

    // pair-baseline
    auto* pair_cmd = app.add_subcommand("pair-baseline",
                                        "binary sentiment scoring on 2-tweet graphs");
    std::string pair_graphs, pair_ckpt, pair_json;
    EmbeddingArgs pair_embeddings;
    std::vector<std::string> pair_external;
    int pair_batch = 32;
    pair_cmd->add_option("--graphs", pair_graphs, "2-tweet graphs file (jsonl)")->required();
    pair_cmd->add_option("--embeddings", pair_embeddings.primary_path, "primary embedding table")->required();
    pair_cmd->add_option("--fallback", pair_embeddings.fallback_path, "fallback embedding table");
    pair_cmd->add_option("--checkpoint", pair_ckpt, "trained checkpoint (json)")->required();
    pair_cmd->add_option("--external", pair_external,
                         "external predictions as name=path (repeatable)");
    pair_cmd->add_option("--json", pair_json, "write the machine-readable report here");
    pair_cmd->add_option("--batch", pair_batch, "evaluation batch size")->default_val(pair_batch);

    // grad-check
    auto* grad_cmd = app.add_subcommand("grad-check",
                                        "finite-difference check of full-model gradients");
    std::string grad_conv = "all";
    double grad_eps = 1e-5, grad_tol = 1e-4;
    std::uint64_t grad_seed = 12;
    grad_cmd->add_option("--conv", grad_conv, "gcn, gatv2, graphconv, or all")->default_val(grad_conv);
    grad_cmd->add_option("--eps", grad_eps, "finite-difference step")->default_val(grad_eps);
    grad_cmd->add_option("--tol", grad_tol, "max relative error allowed")->default_val(grad_tol);
    grad_cmd->add_option("--seed", grad_seed, "toy-model seed")->default_val(grad_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen_cmd->parsed())
            return run_gen_synth(gen_out, gen_emb_out, gen_dim, gen_config);
        if (pre_cmd->parsed())
            return run_preprocess(pre_corpus, pre_out, pre_tables, pre_preds);
        if (build_cmd->parsed())
            return run_build_graphs(build_corpus, build_out, group_size, build_tables,
                                    build_embeddings, build_preds, build_seed);
        if (train_cmd->parsed())
            return run_train(train_graphs, train_embeddings,
                             to_train_config(train_model, train_lr, train_epochs, train_batch,
                                             train_dropout, train_seed, train_split,
                                             train_class_weights, train_target_f1),
                             train_ckpt, train_history);
        if (eval_cmd->parsed())
            return run_evaluate(eval_graphs, eval_embeddings, eval_ckpt, eval_json, eval_batch);
        if (ablate_cmd->parsed())
            return run_ablate(ablate_graphs, ablate_embeddings,
                              to_train_config(ablate_model, ablate_lr, ablate_epochs, ablate_batch,
                                              ablate_dropout, ablate_seed, ablate_split,
                                              ablate_class_weights, -1.0),
                              ablate_json);
        if (pair_cmd->parsed())
            return run_pair_baseline(pair_graphs, pair_embeddings, pair_ckpt, pair_external,
                                     pair_json, pair_batch);
        if (grad_cmd->parsed())
            return run_grad_check(grad_conv, grad_eps, grad_tol, grad_seed);
    } catch (const mlta::NonFiniteValue& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const mlta::NonFiniteGradient& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const mlta::NonScalarLoss& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const mlta::ShapeMismatch& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const mlta::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
