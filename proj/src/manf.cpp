#include "relief/manf.hpp"

#include <cmath>

namespace relief {

using nn::GradientSet;
using nn::Matrix;
using nn::MatrixRef;
using nn::ParameterSet;
using nn::Tensor;

int ManfTopology::embedding_size() const noexcept {
  if (!use_cnn) return kChannelCount * height * width;
  return kConvChannels * (height / 2) * (width / 2);
}

void ManfTopology::validate() const {
  if (height <= 0 || width <= 0 || agent_count <= 0) {
    throw Error(ErrorCode::Config, "topology needs positive grid dims and agent count");
  }
  if (use_cnn && (height % 2 != 0 || width % 2 != 0)) {
    throw Error(ErrorCode::Dimension, "the conv extractor needs even grid dims");
  }
  if (embed_dim <= 0 || hidden_mult <= 0) throw Error(ErrorCode::Config, "embed_dim and hidden_mult must be positive");
}

Json ManfTopology::to_json() const {
  return {{"height", height},         {"width", width},           {"agent_count", agent_count},
          {"embed_dim", embed_dim},   {"hidden_mult", hidden_mult}, {"use_cnn", use_cnn}};
}

ManfTopology ManfTopology::from_json(const Json& doc) {
  ManfTopology t;
  try {
    t.height = doc.at("height").get<int>();
    t.width = doc.at("width").get<int>();
    t.agent_count = doc.at("agent_count").get<int>();
    t.embed_dim = doc.value("embed_dim", 32);
    t.hidden_mult = doc.value("hidden_mult", 10);
    t.use_cnn = doc.value("use_cnn", true);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("topology: ") + e.what());
  }
  t.validate();
  return t;
}

template <class T>
ParameterSet<T> init_manf_parameters(const ManfTopology& topo, std::uint64_t seed) {
  topo.validate();
  std::mt19937_64 rng(seed);
  ParameterSet<T> p;
  const int cells = topo.cell_count();
  const int e = topo.embedding_size();
  const int in = topo.agent_input_size();
  const int hidden = topo.agent_hidden_size();
  const int n = topo.agent_count;
  const int d = topo.embed_dim;
  auto dense = [&](const std::string& name, int fan_in, int fan_out) {
    p.add(name + ".weight", nn::glorot_uniform<T>({fan_in, fan_out}, fan_in, fan_out, rng));
    p.add(name + ".bias", Tensor<T>({fan_out}));
  };
  if (topo.use_cnn) {
    const int cout = ManfTopology::kConvChannels;
    p.add("cnn.conv.kernels", nn::glorot_uniform<T>({cout, kChannelCount, 3, 3}, kChannelCount * 9, cout * 9, rng));
    p.add("cnn.conv.bias", Tensor<T>({cout}));
  }
  dense("agent.hidden", in, hidden);
  dense("agent.out", hidden, cells);
  dense("mix.w1", e, n * d);
  dense("mix.b1", e, d);
  dense("mix.w2", e, d);
  dense("mix.b2_hidden", e, d);
  dense("mix.b2_out", d, 1);
  return p;
}

namespace {

template <class T>
void accumulate(GradientSet<T>& grads, const std::string& name, const Tensor<T>& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
    return;
  }
  if (it->second.size() != g.size()) throw Error(ErrorCode::Dimension, "gradient size for '" + name + "'");
  for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
}

template <class T>
void accumulate_dense(GradientSet<T>& grads, const std::string& name, nn::DenseGrads<T>& g) {
  accumulate(grads, name + ".weight", g.weights);
  accumulate(grads, name + ".bias", g.bias);
}

template <class T>
T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

}  // namespace

template <class T>
EmbedPass<T> embed_forward(const ParameterSet<T>& params, const ManfTopology& topo, const std::vector<T>& channels,
                           int batch) {
  const int cells = topo.cell_count();
  if (channels.size() != static_cast<std::size_t>(batch) * kChannelCount * cells) {
    throw Error(ErrorCode::Dimension, "embed: expected " + std::to_string(kChannelCount) + " channels of " +
                                          std::to_string(topo.height) + "x" + std::to_string(topo.width));
  }
  EmbedPass<T> pass;
  pass.input = Tensor<T>({batch, kChannelCount, topo.height, topo.width});
  pass.input.data.assign(channels.begin(), channels.end());
  if (!topo.use_cnn) {
    pass.embedding = Eigen::Map<const Matrix<T>>(channels.data(), batch, kChannelCount * cells);
    return pass;
  }
  pass.conv_out = nn::conv2d_forward(pass.input, params.at("cnn.conv.kernels"), params.at("cnn.conv.bias"));
  pass.relu_out = nn::relu_forward(pass.conv_out);
  const Tensor<T> pooled = nn::avg_pool2_forward(pass.relu_out);
  pass.embedding = Eigen::Map<const Matrix<T>>(pooled.data.data(), batch, topo.embedding_size());
  return pass;
}

template <class T>
void embed_backward(const ParameterSet<T>& params, const ManfTopology& topo, const EmbedPass<T>& pass,
                    const MatrixRef<T>& d_embedding, GradientSet<T>& grads) {
  if (!topo.use_cnn) return;
  const int batch = pass.input.dim(0);
  Tensor<T> d_pooled({batch, ManfTopology::kConvChannels, topo.height / 2, topo.width / 2});
  Eigen::Map<Matrix<T>>(d_pooled.data.data(), batch, topo.embedding_size()) = d_embedding;
  const Tensor<T> d_relu = nn::avg_pool2_backward(pass.relu_out.shape, d_pooled);
  const Tensor<T> d_conv = nn::relu_backward(pass.conv_out, d_relu);
  auto g = nn::conv2d_backward(pass.input, params.at("cnn.conv.kernels"), d_conv);
  accumulate(grads, "cnn.conv.kernels", g.kernels);
  accumulate(grads, "cnn.conv.bias", g.bias);
}

template <class T>
AgentPass<T> agent_forward(const ParameterSet<T>& params, const ManfTopology& topo, const MatrixRef<T>& embedding,
                           std::span<const LocalFeatures> locals) {
  const int n = topo.agent_count;
  const int e = topo.embedding_size();
  const int cells = topo.cell_count();
  const auto batch = embedding.rows();
  if (embedding.cols() != e || static_cast<Eigen::Index>(locals.size()) != batch * n) {
    throw Error(ErrorCode::Dimension, "agent_q: embedding/local feature dimensions do not match the topology");
  }
  AgentPass<T> pass;
  pass.input = Matrix<T>::Zero(batch * n, topo.agent_input_size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int i = 0; i < n; ++i) {
      const Eigen::Index r = b * n + i;
      const LocalFeatures& l = locals[static_cast<std::size_t>(r)];
      if (l.loc < 0 || l.loc >= cells || l.agent_id < 0 || l.agent_id >= n) {
        throw Error(ErrorCode::Dimension, "agent_q: local features out of range for the topology");
      }
      pass.input.row(r).head(e) = embedding.row(b);
      pass.input(r, e + l.loc) = T(1);
      pass.input(r, e + cells + l.agent_id) = T(1);
      pass.input(r, e + cells + n) = static_cast<T>(l.urge);
    }
  }
  pass.hidden_pre = nn::dense_forward<T>(pass.input, params.at("agent.hidden.weight"), params.at("agent.hidden.bias"));
  pass.hidden = nn::relu_forward<T>(pass.hidden_pre);
  pass.q = nn::dense_forward<T>(pass.hidden, params.at("agent.out.weight"), params.at("agent.out.bias"));
  return pass;
}

template <class T>
Matrix<T> agent_backward(const ParameterSet<T>& params, const ManfTopology& topo, const AgentPass<T>& pass,
                         const MatrixRef<T>& dq, GradientSet<T>& grads) {
  auto g_out = nn::dense_backward<T>(pass.hidden, params.at("agent.out.weight"), dq);
  accumulate_dense(grads, "agent.out", g_out);
  const Matrix<T> d_pre = nn::relu_backward<T>(pass.hidden_pre, g_out.input);
  auto g_hidden = nn::dense_backward<T>(pass.input, params.at("agent.hidden.weight"), d_pre);
  accumulate_dense(grads, "agent.hidden", g_hidden);

  const int n = topo.agent_count;
  const int e = topo.embedding_size();
  const Eigen::Index batch = pass.input.rows() / n;
  Matrix<T> d_embedding = Matrix<T>::Zero(batch, e);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int i = 0; i < n; ++i) d_embedding.row(b) += g_hidden.input.row(b * n + i).head(e);
  }
  return d_embedding;
}

template <class T>
MixPass<T> mix_forward(const ParameterSet<T>& params, const ManfTopology& topo, const MatrixRef<T>& embedding,
                       const MatrixRef<T>& q_chosen) {
  const int n = topo.agent_count;
  const int d = topo.embed_dim;
  const auto batch = embedding.rows();
  if (q_chosen.rows() != batch || q_chosen.cols() != n) {
    throw Error(ErrorCode::Dimension, "mix: expected " + std::to_string(n) + " chosen Q values per state");
  }
  if (embedding.cols() != topo.embedding_size()) throw Error(ErrorCode::Dimension, "mix: embedding size");
  MixPass<T> p;
  p.embedding = embedding;
  p.q = q_chosen;
  p.w1_raw = nn::dense_forward<T>(embedding, params.at("mix.w1.weight"), params.at("mix.w1.bias"));
  p.b1 = nn::dense_forward<T>(embedding, params.at("mix.b1.weight"), params.at("mix.b1.bias"));
  p.w2_raw = nn::dense_forward<T>(embedding, params.at("mix.w2.weight"), params.at("mix.w2.bias"));
  p.b2_pre = nn::dense_forward<T>(embedding, params.at("mix.b2_hidden.weight"), params.at("mix.b2_hidden.bias"));
  p.b2_hidden = nn::relu_forward<T>(p.b2_pre);
  const Matrix<T> b2 = nn::dense_forward<T>(p.b2_hidden, params.at("mix.b2_out.weight"), params.at("mix.b2_out.bias"));

  p.hidden_pre = p.b1;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Map<const Matrix<T>> w1(p.w1_raw.row(b).data(), n, d);
    p.hidden_pre.row(b) += q_chosen.row(b) * w1.cwiseAbs();
  }
  p.hidden = nn::relu_forward<T>(p.hidden_pre);
  p.q_tot.resize(static_cast<std::size_t>(batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    p.q_tot[static_cast<std::size_t>(b)] = p.hidden.row(b).dot(p.w2_raw.row(b).cwiseAbs()) + b2(b, 0);
  }
  return p;
}

template <class T>
MixGrads<T> mix_backward(const ParameterSet<T>& params, const ManfTopology& topo, const MixPass<T>& p,
                         std::span<const T> d_qtot, GradientSet<T>& grads) {
  const int n = topo.agent_count;
  const int d = topo.embed_dim;
  const auto batch = p.embedding.rows();
  if (static_cast<Eigen::Index>(d_qtot.size()) != batch) throw Error(ErrorCode::Dimension, "mix backward: batch");

  Matrix<T> d_hidden(batch, d), d_w2_raw(batch, d), d_b2(batch, 1);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const T g = d_qtot[static_cast<std::size_t>(b)];
    d_b2(b, 0) = g;
    for (int k = 0; k < d; ++k) {
      d_hidden(b, k) = g * std::abs(p.w2_raw(b, k));
      d_w2_raw(b, k) = g * p.hidden(b, k) * sign(p.w2_raw(b, k));
    }
  }
  const Matrix<T> d_hpre = nn::relu_backward<T>(p.hidden_pre, d_hidden);

  MixGrads<T> out;
  out.q = Matrix<T>::Zero(batch, n);
  Matrix<T> d_w1_raw(batch, static_cast<Eigen::Index>(n) * d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) {
        const T w = p.w1_raw(b, i * d + k);
        out.q(b, i) += d_hpre(b, k) * std::abs(w);
        d_w1_raw(b, i * d + k) = p.q(b, i) * d_hpre(b, k) * sign(w);
      }
    }
  }

  auto g_b2_out = nn::dense_backward<T>(p.b2_hidden, params.at("mix.b2_out.weight"), d_b2);
  accumulate_dense(grads, "mix.b2_out", g_b2_out);
  const Matrix<T> d_b2_pre = nn::relu_backward<T>(p.b2_pre, g_b2_out.input);
  auto g_b2_hidden = nn::dense_backward<T>(p.embedding, params.at("mix.b2_hidden.weight"), d_b2_pre);
  accumulate_dense(grads, "mix.b2_hidden", g_b2_hidden);
  auto g_w1 = nn::dense_backward<T>(p.embedding, params.at("mix.w1.weight"), d_w1_raw);
  accumulate_dense(grads, "mix.w1", g_w1);
  auto g_b1 = nn::dense_backward<T>(p.embedding, params.at("mix.b1.weight"), d_hpre);
  accumulate_dense(grads, "mix.b1", g_b1);
  auto g_w2 = nn::dense_backward<T>(p.embedding, params.at("mix.w2.weight"), d_w2_raw);
  accumulate_dense(grads, "mix.w2", g_w2);

  out.embedding = g_b2_hidden.input + g_w1.input + g_b1.input + g_w2.input;
  return out;
}

std::vector<float> embed(const GlobalChannels& channels, const ParameterSet<float>& params, const ManfTopology& topo) {
  if (channels.height != topo.height || channels.width != topo.width) {
    throw Error(ErrorCode::Dimension, "embed: channel grid does not match the topology");
  }
  const auto pass = embed_forward<float>(params, topo, channels.flatten(), 1);
  return {pass.embedding.data(), pass.embedding.data() + pass.embedding.size()};
}

std::vector<float> agent_q(std::span<const float> embedding, const LocalFeatures& local,
                           const ParameterSet<float>& params, const ManfTopology& topo) {
  const int e = topo.embedding_size();
  const int cells = topo.cell_count();
  const int n = topo.agent_count;
  if (static_cast<int>(embedding.size()) != e) throw Error(ErrorCode::Dimension, "agent_q: embedding size");
  if (local.loc < 0 || local.loc >= cells || local.agent_id < 0 || local.agent_id >= n) {
    throw Error(ErrorCode::Dimension, "agent_q: local features out of range for the topology");
  }
  Matrix<float> x = Matrix<float>::Zero(1, topo.agent_input_size());
  for (int k = 0; k < e; ++k) x(0, k) = embedding[static_cast<std::size_t>(k)];
  x(0, e + local.loc) = 1.0f;
  x(0, e + cells + local.agent_id) = 1.0f;
  x(0, e + cells + n) = static_cast<float>(local.urge);
  const Matrix<float> h = nn::relu_forward<float>(
      nn::dense_forward<float>(x, params.at("agent.hidden.weight"), params.at("agent.hidden.bias")));
  const Matrix<float> q = nn::dense_forward<float>(h, params.at("agent.out.weight"), params.at("agent.out.bias"));
  return {q.data(), q.data() + q.size()};
}

double mix(std::span<const float> embedding, std::span<const float> q_chosen, const ParameterSet<float>& params,
           const ManfTopology& topo) {
  // Copies into aligned storage; see AlignedVector.
  const Matrix<float> s = Eigen::Map<const Matrix<float>>(embedding.data(), 1, static_cast<Eigen::Index>(embedding.size()));
  const Matrix<float> q = Eigen::Map<const Matrix<float>>(q_chosen.data(), 1, static_cast<Eigen::Index>(q_chosen.size()));
  return mix_forward<float>(params, topo, s, q).q_tot.at(0);
}

template <class T>
ManfLoss<T> manf_loss(const ParameterSet<T>& params, const ManfTopology& topo, const ManfBatch<T>& batch,
                      std::span<const CellIndex> chosen, const std::vector<T>& targets, bool with_grads) {
  const int n = topo.agent_count;
  if (batch.size <= 0) throw Error(ErrorCode::InvalidArgument, "manf_loss: empty batch");
  if (chosen.size() != static_cast<std::size_t>(batch.size) * n || targets.size() != static_cast<std::size_t>(batch.size)) {
    throw Error(ErrorCode::Dimension, "manf_loss: chosen actions/targets do not match the batch");
  }
  const EmbedPass<T> ep = embed_forward(params, topo, batch.channels, batch.size);
  const AgentPass<T> ap = agent_forward<T>(params, topo, ep.embedding, batch.locals);
  Matrix<T> q_chosen(batch.size, n);
  for (int b = 0; b < batch.size; ++b) {
    for (int i = 0; i < n; ++i) q_chosen(b, i) = ap.q(b * n + i, chosen[static_cast<std::size_t>(b * n + i)]);
  }
  const MixPass<T> mp = mix_forward<T>(params, topo, ep.embedding, q_chosen);
  auto loss = nn::squared_error(mp.q_tot, targets);

  ManfLoss<T> out;
  out.loss = loss.loss;
  out.q_tot = mp.q_tot;
  if (!with_grads) return out;

  out.grads = params.zero_gradients();
  const MixGrads<T> mg = mix_backward<T>(params, topo, mp, loss.grad, out.grads);
  Matrix<T> dq = Matrix<T>::Zero(ap.q.rows(), ap.q.cols());
  for (int b = 0; b < batch.size; ++b) {
    for (int i = 0; i < n; ++i) dq(b * n + i, chosen[static_cast<std::size_t>(b * n + i)]) = mg.q(b, i);
  }
  const Matrix<T> d_embedding = agent_backward<T>(params, topo, ap, dq, out.grads) + mg.embedding;
  embed_backward<T>(params, topo, ep, d_embedding, out.grads);
  return out;
}

PolicyCheckpoint PolicyCheckpoint::create(const ManfTopology& topo, std::uint64_t seed) {
  PolicyCheckpoint ck;
  ck.topology = topo;
  ck.seed = seed;
  ck.eval = init_manf_parameters<float>(topo, seed);
  ck.sync_targets();
  return ck;
}

void PolicyCheckpoint::sync_targets() {
  target = ParameterSet<float>();
  for (const auto& [name, p] : eval) target.add(name, p.value);
}

std::string PolicyCheckpoint::serialize() const {
  ParameterSet<float> all;
  for (const auto& [name, p] : eval) all.add("eval/" + name, p.value);
  for (const auto& [name, p] : target) all.add("target/" + name, p.value);
  Json meta{{"topology", topology.to_json()}, {"step", step}, {"seed", seed}, {"extra", extra}};
  return nn::serialize_parameters(all, meta);
}

PolicyCheckpoint PolicyCheckpoint::deserialize(const std::string& bytes, const std::string& origin) {
  auto loaded = nn::deserialize_parameters(bytes, origin);
  PolicyCheckpoint ck;
  try {
    ck.topology = ManfTopology::from_json(loaded.header.at("topology"));
    ck.step = loaded.header.value("step", std::int64_t{0});
    ck.seed = loaded.header.value("seed", std::uint64_t{0});
    ck.extra = loaded.header.value("extra", Json::object());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Parse, origin + ": " + e.what());
  }
  for (const auto& [name, p] : loaded.params) {
    if (name.rfind("eval/", 0) == 0) {
      ck.eval.add(name.substr(5), p.value);
    } else if (name.rfind("target/", 0) == 0) {
      ck.target.add(name.substr(7), p.value);
    } else {
      throw Error(ErrorCode::Parse, origin + ": unexpected parameter '" + name + "'");
    }
  }
  const auto expected = init_manf_parameters<float>(ck.topology, 0);
  for (const auto* set : {&ck.eval, &ck.target}) {
    if (set->size() != expected.size()) throw Error(ErrorCode::Parse, origin + ": parameter list does not match topology");
    for (const auto& [name, p] : expected) {
      if (!set->contains(name) || set->at(name).shape != p.value.shape) {
        throw Error(ErrorCode::Parse, origin + ": parameter '" + name + "' missing or mis-shaped");
      }
    }
  }
  return ck;
}

void PolicyCheckpoint::save(const std::filesystem::path& path) const { write_text_file(path, serialize()); }

PolicyCheckpoint PolicyCheckpoint::load(const std::filesystem::path& path) {
  return deserialize(read_text_file(path), path.string());
}

#define RELIEF_MANF_INSTANTIATE(T)                                                                                 \
  template ParameterSet<T> init_manf_parameters<T>(const ManfTopology&, std::uint64_t);                           \
  template EmbedPass<T> embed_forward<T>(const ParameterSet<T>&, const ManfTopology&, const std::vector<T>&, int); \
  template void embed_backward<T>(const ParameterSet<T>&, const ManfTopology&, const EmbedPass<T>&,                \
                                  const MatrixRef<T>&, GradientSet<T>&);                                           \
  template AgentPass<T> agent_forward<T>(const ParameterSet<T>&, const ManfTopology&, const MatrixRef<T>&,         \
                                         std::span<const LocalFeatures>);                                          \
  template Matrix<T> agent_backward<T>(const ParameterSet<T>&, const ManfTopology&, const AgentPass<T>&,           \
                                       const MatrixRef<T>&, GradientSet<T>&);                                      \
  template MixPass<T> mix_forward<T>(const ParameterSet<T>&, const ManfTopology&, const MatrixRef<T>&,             \
                                     const MatrixRef<T>&);                                                         \
  template MixGrads<T> mix_backward<T>(const ParameterSet<T>&, const ManfTopology&, const MixPass<T>&,             \
                                       std::span<const T>, GradientSet<T>&);                                       \
  template ManfLoss<T> manf_loss<T>(const ParameterSet<T>&, const ManfTopology&, const ManfBatch<T>&,              \
                                    std::span<const CellIndex>, const std::vector<T>&, bool);

RELIEF_MANF_INSTANTIATE(float)
RELIEF_MANF_INSTANTIATE(double)

#undef RELIEF_MANF_INSTANTIATE

}  // namespace relief
