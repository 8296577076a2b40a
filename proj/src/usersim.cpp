#include "simlab/usersim.hpp"

#include <cmath>
#include <fstream>

namespace simlab {

namespace {

nlohmann::json read_model_json(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error &e) {
    throw DataError("malformed model file '" + path.string() + "': " + e.what());
  }
}

void write_model_json(const std::filesystem::path &path, const nlohmann::json &j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

void check_header(const nlohmann::json &j, const std::string &kind) {
  if (j.value("kind", std::string()) != kind)
    throw DataError("model kind is '" + j.value("kind", std::string("?")) + "', expected '" + kind + "'");
  const int version = j.value("layout_version", -1);
  if (version != kModelLayoutVersion)
    throw DataError("model layout version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kModelLayoutVersion) + ")");
}

std::vector<double> one_hot(std::size_t width, int index) {
  std::vector<double> x(width, 0.0);
  x.at(static_cast<std::size_t>(index)) = 1.0;
  return x;
}

std::size_t argmax(const std::vector<double> &p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

} // namespace

GeneratorModel::GeneratorModel(FeatureLayout layout, std::size_t hidden)
    : layout_(std::move(layout)), hidden_(hidden) {
  encoder_ = nn::LstmCell::create(params_, "encoder", layout_.width(), hidden_);
  decoder_ = nn::LstmCell::create(params_, "decoder", layout_.user_vocab().size(), hidden_);
  projection_ = nn::Dense::create(params_, "projection", hidden_, layout_.user_vocab().size(),
                                  nn::Activation::Identity);
  mask_.assign(layout_.user_vocab().size(), true);
  mask_[kSos] = false;
  mask_[kPad] = false;
}

std::size_t GeneratorModel::visible_tokens() const {
  std::size_t n = 0;
  for (bool m : mask_) n += m ? 1 : 0;
  return n;
}

void GeneratorModel::initialize(Rng &rng, double scale) {
  params_.init_uniform(rng, scale);
  for (const auto *cell : {&encoder_, &decoder_}) {
    auto &b = params_[cell->b].value.data;
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t k = 0; k < hidden_; ++k) b[hidden_ + k] = 1.0;  // forget gate
  }
  auto &pb = params_[projection_.b].value.data;
  std::fill(pb.begin(), pb.end(), 0.0);
}

nlohmann::json GeneratorModel::to_json(const nlohmann::json &metadata) const {
  return {{"kind", "generator"},
          {"layout_version", kModelLayoutVersion},
          {"dims", {{"context", context_width()}, {"hidden", hidden_}, {"vocab", vocab_size()}}},
          {"decoder_context", "encoder-only"},
          {"feature_layout", layout_.to_json()},
          {"params", params_.to_json()},
          {"metadata", metadata}};
}

GeneratorModel GeneratorModel::from_json(const nlohmann::json &j) {
  check_header(j, "generator");
  GeneratorModel g(FeatureLayout::from_json(j.at("feature_layout")), j.at("dims").at("hidden").get<std::size_t>());
  if (j.at("dims").at("context").get<std::size_t>() != g.context_width())
    throw DataError("generator context width does not match its feature layout");
  g.params_.load_json(j.at("params"));
  return g;
}

void GeneratorModel::save(const std::filesystem::path &path, const nlohmann::json &metadata) const {
  write_model_json(path, to_json(metadata));
}

GeneratorModel GeneratorModel::load(const std::filesystem::path &path) { return from_json(read_model_json(path)); }

nn::RecurrentState encode_turn(const GeneratorModel &g, const nn::RecurrentState &prev, const ContextVector &x,
                               nn::LstmCache *cache) {
  return nn::lstm_step(g.params(), g.encoder(), x, prev, cache);
}

StepDistribution decoder_step(const GeneratorModel &g, nn::RecurrentState &state, int input_token,
                              nn::LstmCache *cell_cache, nn::DenseCache *out_cache) {
  const auto x = one_hot(g.vocab_size(), input_token);
  state = nn::lstm_step(g.params(), g.decoder(), x, state, cell_cache);
  const auto logits = nn::dense_forward(g.params(), g.projection(), state.h, out_cache);
  return {nn::masked_softmax(logits, g.output_mask())};
}

TurnRollout generate_response(const GeneratorModel &g, const nn::RecurrentState &s, DecodeMode mode, Rng &rng,
                              DecoderTape *tape) {
  TurnRollout r;
  nn::RecurrentState state = s;
  int input = kSos;
  while (true) {
    nn::LstmCache cc;
    nn::DenseCache oc;
    auto dist = decoder_step(g, state, input, tape ? &cc : nullptr, tape ? &oc : nullptr);
    const int chosen = static_cast<int>(mode == DecodeMode::Greedy ? argmax(dist.probs) : rng.categorical(dist.probs));
    r.logprobs.push_back(std::log(dist.probs[static_cast<std::size_t>(chosen)]));
    if (tape) {
      tape->chosen.push_back(chosen);
      tape->cells.push_back(std::move(cc));
      tape->outputs.push_back(std::move(oc));
      tape->probs.push_back(dist.probs);
    }
    r.dists.push_back(std::move(dist.probs));
    if (chosen == kEos) {
      r.ended_with_eos = true;
      break;
    }
    r.tokens.push_back(chosen);
    if (r.tokens.size() >= kMaxUserActs) break;
    input = chosen;
  }
  return r;
}

namespace {

void check_reference(const GeneratorModel &g, const std::vector<int> &tokens) {
  if (tokens.size() > kMaxUserActs) throw VocabularyError("reference sequence longer than the act cap");
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= g.vocab_size() || !g.output_mask()[static_cast<std::size_t>(t)] ||
        t == kEos)
      throw VocabularyError("token id " + std::to_string(t) + " cannot appear in a user act sequence");
  }
}

} // namespace

DecoderTape teacher_forced_tape(const GeneratorModel &g, const nn::RecurrentState &s, const std::vector<int> &tokens) {
  check_reference(g, tokens);
  DecoderTape tape;
  std::vector<int> targets = tokens;
  if (targets.size() < kMaxUserActs) targets.push_back(kEos);
  nn::RecurrentState state = s;
  int input = kSos;
  for (int target : targets) {
    nn::LstmCache cc;
    nn::DenseCache oc;
    auto dist = decoder_step(g, state, input, &cc, &oc);
    tape.chosen.push_back(target);
    tape.cells.push_back(std::move(cc));
    tape.outputs.push_back(std::move(oc));
    tape.probs.push_back(std::move(dist.probs));
    input = target;
  }
  return tape;
}

double sequence_logprob(const GeneratorModel &g, const nn::RecurrentState &s, const std::vector<int> &tokens) {
  check_reference(g, tokens);
  double total = 0.0;
  nn::RecurrentState state = s;
  int input = kSos;
  for (std::size_t k = 0; k <= tokens.size() && k < kMaxUserActs; ++k) {
    const int target = k < tokens.size() ? tokens[k] : kEos;
    const auto dist = decoder_step(g, state, input);
    total += std::log(dist.probs[static_cast<std::size_t>(target)]);
    input = target;
  }
  return total;
}

nn::RecurrentState decoder_backward(GeneratorModel &g, const DecoderTape &tape, double weight) {
  const std::size_t H = g.hidden();
  std::vector<double> dh(H, 0.0), dc(H, 0.0);
  for (std::size_t k = tape.chosen.size(); k-- > 0;) {
    auto dlogits = nn::xent_grad(tape.probs[k], static_cast<std::size_t>(tape.chosen[k]));
    for (double &v : dlogits) v *= weight;
    std::vector<double> dh_out(H, 0.0);
    nn::dense_backward(g.params(), g.projection(), tape.outputs[k], dlogits, dh_out);
    for (std::size_t i = 0; i < H; ++i) dh[i] += dh_out[i];
    nn::lstm_backward(g.params(), g.decoder(), tape.cells[k], dh, dc, {});
  }
  return {std::move(dh), std::move(dc)};
}

std::vector<int> token_ids(const Vocabulary &v, const std::vector<std::string> &tokens) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto &t : tokens) out.push_back(v.index(t));
  return out;
}

DiscriminatorModel::DiscriminatorModel(FeatureLayout layout, std::size_t hidden)
    : layout_(std::move(layout)), hidden_(hidden) {
  hidden_layer_ = nn::Dense::create(params_, "hidden", input_width(), hidden_, nn::Activation::Tanh);
  output_layer_ = nn::Dense::create(params_, "output", hidden_, 2, nn::Activation::Identity);
}

std::size_t DiscriminatorModel::input_width() const {
  return layout_.width() + kMaxUserActs * layout_.user_vocab().size();
}

void DiscriminatorModel::initialize(Rng &rng, double scale) {
  params_.init_uniform(rng, scale);
  for (auto idx : {hidden_layer_.b, output_layer_.b}) params_[idx].value.zero();
}

std::vector<double> DiscriminatorModel::assemble_input(const ContextVector &x, const std::vector<int> &tokens) const {
  if (x.size() != layout_.width())
    throw ShapeError("discriminator context width " + std::to_string(x.size()) + " != " +
                     std::to_string(layout_.width()));
  if (tokens.size() > kMaxUserActs) throw ShapeError("discriminator accepts at most 3 act tokens");
  const std::size_t V = layout_.user_vocab().size();
  std::vector<double> in(input_width(), 0.0);
  std::copy(x.begin(), x.end(), in.begin());
  for (std::size_t pos = 0; pos < kMaxUserActs; ++pos) {
    const int tok = pos < tokens.size() ? tokens[pos] : kPad;
    if (tok < 0 || static_cast<std::size_t>(tok) >= V) throw VocabularyError("token id out of range");
    in[layout_.width() + pos * V + static_cast<std::size_t>(tok)] = 1.0;
  }
  return in;
}

nlohmann::json DiscriminatorModel::to_json(const nlohmann::json &metadata) const {
  return {{"kind", "discriminator"},
          {"layout_version", kModelLayoutVersion},
          {"dims", {{"input", input_width()}, {"hidden", hidden_}, {"classes", 2}}},
          {"class_convention", "index 1 = real"},
          {"sequence_encoding", "positional one-hot x3"},
          {"feature_layout", layout_.to_json()},
          {"params", params_.to_json()},
          {"metadata", metadata}};
}

DiscriminatorModel DiscriminatorModel::from_json(const nlohmann::json &j) {
  check_header(j, "discriminator");
  DiscriminatorModel d(FeatureLayout::from_json(j.at("feature_layout")), j.at("dims").at("hidden").get<std::size_t>());
  d.params_.load_json(j.at("params"));
  return d;
}

void DiscriminatorModel::save(const std::filesystem::path &path, const nlohmann::json &metadata) const {
  write_model_json(path, to_json(metadata));
}

DiscriminatorModel DiscriminatorModel::load(const std::filesystem::path &path) {
  return from_json(read_model_json(path));
}

std::vector<double> discriminator_probs(const DiscriminatorModel &d, const ContextVector &x,
                                        const std::vector<int> &tokens) {
  const auto in = d.assemble_input(x, tokens);
  const auto h = nn::dense_forward(d.params(), d.hidden_layer(), in);
  const auto logits = nn::dense_forward(d.params(), d.output_layer(), h);
  return nn::softmax(logits);
}

double discriminate(const DiscriminatorModel &d, const ContextVector &x, const std::vector<int> &tokens) {
  return discriminator_probs(d, x, tokens)[kRealClass];
}

std::pair<double, double> discriminator_accumulate(DiscriminatorModel &d, const ContextVector &x,
                                                   const std::vector<int> &tokens, std::size_t label, double weight) {
  const auto in = d.assemble_input(x, tokens);
  nn::DenseCache hc, oc;
  const auto h = nn::dense_forward(d.params(), d.hidden_layer(), in, &hc);
  const auto logits = nn::dense_forward(d.params(), d.output_layer(), h, &oc);
  const auto sx = nn::softmax_xent(logits, label);
  auto dlogits = nn::xent_grad(sx.probs, label);
  for (double &v : dlogits) v *= weight;
  std::vector<double> dh(d.hidden(), 0.0);
  nn::dense_backward(d.params(), d.output_layer(), oc, dlogits, dh);
  nn::dense_backward(d.params(), d.hidden_layer(), hc, dh, {});
  return {sx.loss, sx.probs[kRealClass]};
}

double discriminator_accuracy(const std::vector<double> &p_real_on_real, const std::vector<double> &p_real_on_sim) {
  const std::size_t n = p_real_on_real.size() + p_real_on_sim.size();
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  for (double p : p_real_on_real) correct += p > 0.5 ? 1 : 0;
  for (double p : p_real_on_sim) correct += p < 0.5 ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(n);
}

} // namespace simlab
