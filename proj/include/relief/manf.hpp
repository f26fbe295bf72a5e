#ifndef RELIEF_MANF_HPP_
#define RELIEF_MANF_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "relief/error.hpp"
#include "relief/neuralcore.hpp"
#include "relief/observation.hpp"

namespace relief {

/// Shape of the network stack. The agent input is laid out as
/// [embedding | location one-hot | agent-id one-hot | urgency].
struct ManfTopology {
  static constexpr int kConvChannels = 10;

  int height = 0;
  int width = 0;
  int agent_count = 0;
  int embed_dim = 32;   // mixing hidden width
  int hidden_mult = 10; // agent hidden width = hidden_mult * agent input width
  bool use_cnn = true;  // false: raw channels are flattened into the embedding

  int cell_count() const noexcept { return height * width; }
  int embedding_size() const noexcept;
  int agent_input_size() const noexcept { return embedding_size() + cell_count() + agent_count + 1; }
  int agent_hidden_size() const noexcept { return hidden_mult * agent_input_size(); }

  void validate() const;
  Json to_json() const;
  static ManfTopology from_json(const Json& doc);

  bool operator==(const ManfTopology&) const = default;
};

// Freshly initialized eval parameters (Glorot-uniform weights, zero biases).
template <class T>
nn::ParameterSet<T> init_manf_parameters(const ManfTopology& topo, std::uint64_t seed);

// A batch of states: channels are B x 5 x H x W, locals are B x N in
// record-major order.
template <class T>
struct ManfBatch {
  int size = 0;
  std::vector<T> channels;
  std::vector<LocalFeatures> locals;
};

template <class T>
struct EmbedPass {
  nn::Tensor<T> input;
  nn::Tensor<T> conv_out;
  nn::Tensor<T> relu_out;
  nn::Matrix<T> embedding;  // B x E
};

template <class T>
EmbedPass<T> embed_forward(const nn::ParameterSet<T>& params, const ManfTopology& topo,
                           const std::vector<T>& channels, int batch);
template <class T>
void embed_backward(const nn::ParameterSet<T>& params, const ManfTopology& topo, const EmbedPass<T>& pass,
                    const nn::MatrixRef<T>& d_embedding, nn::GradientSet<T>& grads);

template <class T>
struct AgentPass {
  nn::Matrix<T> input;       // (B*N) x agent_input_size
  nn::Matrix<T> hidden_pre;  // (B*N) x hidden
  nn::Matrix<T> hidden;
  nn::Matrix<T> q;           // (B*N) x cells
};

template <class T>
AgentPass<T> agent_forward(const nn::ParameterSet<T>& params, const ManfTopology& topo,
                           const nn::MatrixRef<T>& embedding, std::span<const LocalFeatures> locals);
// Returns d loss / d embedding (B x E).
template <class T>
nn::Matrix<T> agent_backward(const nn::ParameterSet<T>& params, const ManfTopology& topo, const AgentPass<T>& pass,
                             const nn::MatrixRef<T>& dq, nn::GradientSet<T>& grads);

template <class T>
struct MixPass {
  nn::Matrix<T> embedding;  // B x E
  nn::Matrix<T> q;          // B x N
  nn::Matrix<T> w1_raw;     // B x (N*D), row-major N x D per record
  nn::Matrix<T> b1;         // B x D
  nn::Matrix<T> hidden_pre; // B x D
  nn::Matrix<T> hidden;
  nn::Matrix<T> w2_raw;     // B x D
  nn::Matrix<T> b2_pre;     // B x D
  nn::Matrix<T> b2_hidden;
  std::vector<T> q_tot;     // B
};

template <class T>
MixPass<T> mix_forward(const nn::ParameterSet<T>& params, const ManfTopology& topo,
                       const nn::MatrixRef<T>& embedding, const nn::MatrixRef<T>& q_chosen);

template <class T>
struct MixGrads {
  nn::Matrix<T> embedding;  // B x E
  nn::Matrix<T> q;          // B x N
};
template <class T>
MixGrads<T> mix_backward(const nn::ParameterSet<T>& params, const ManfTopology& topo, const MixPass<T>& pass,
                         std::span<const T> d_qtot, nn::GradientSet<T>& grads);

// Single-state conveniences.
std::vector<float> embed(const GlobalChannels& channels, const nn::ParameterSet<float>& params,
                         const ManfTopology& topo);
std::vector<float> agent_q(std::span<const float> embedding, const LocalFeatures& local,
                           const nn::ParameterSet<float>& params, const ManfTopology& topo);
double mix(std::span<const float> embedding, std::span<const float> q_chosen, const nn::ParameterSet<float>& params,
           const ManfTopology& topo);

// Ties go to the lowest cell index.
template <class Row>
CellIndex masked_argmax(const Row& q, std::span<const CellIndex> mask);
template <class Row>
double masked_max(const Row& q, std::span<const CellIndex> mask);

/// Squared TD/regression loss through the whole stack:
/// embed -> agent_q -> gather chosen -> mix, against fixed targets.
template <class T>
struct ManfLoss {
  T loss = T(0);
  std::vector<T> q_tot;
  nn::GradientSet<T> grads;
};
template <class T>
ManfLoss<T> manf_loss(const nn::ParameterSet<T>& params, const ManfTopology& topo, const ManfBatch<T>& batch,
                      std::span<const CellIndex> chosen, const std::vector<T>& targets, bool with_grads = true);

/// Eval and target copies of every network plus bookkeeping.
struct PolicyCheckpoint {
  ManfTopology topology;
  nn::ParameterSet<float> eval;
  nn::ParameterSet<float> target;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  Json extra = Json::object();

  static PolicyCheckpoint create(const ManfTopology& topo, std::uint64_t seed);

  // Copies every eval network, conv extractor included, into the targets.
  void sync_targets();

  std::string serialize() const;
  static PolicyCheckpoint deserialize(const std::string& bytes, const std::string& origin);
  void save(const std::filesystem::path& path) const;
  static PolicyCheckpoint load(const std::filesystem::path& path);
};

// ---- template definitions ----

template <class Row>
CellIndex masked_argmax(const Row& q, std::span<const CellIndex> mask) {
  if (mask.empty()) throw Error(ErrorCode::InvalidArgument, "masked_argmax: empty mask");
  CellIndex best = mask[0];
  auto best_q = q[static_cast<std::size_t>(best)];
  for (CellIndex c : mask) {
    const auto v = q[static_cast<std::size_t>(c)];
    if (v > best_q || (v == best_q && c < best)) {
      best = c;
      best_q = v;
    }
  }
  return best;
}

template <class Row>
double masked_max(const Row& q, std::span<const CellIndex> mask) {
  return static_cast<double>(q[static_cast<std::size_t>(masked_argmax(q, mask))]);
}

}  // namespace relief

#endif  // RELIEF_MANF_HPP_
