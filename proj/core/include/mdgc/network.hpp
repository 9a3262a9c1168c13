#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mdgc/conv.hpp"
#include "mdgc/mesh.hpp"
#include "mdgc/windows.hpp"

namespace mdgc {

struct DenseParams {
  Eigen::MatrixXd weight; // in x out
  Eigen::VectorXd bias;   // out
};

enum class OpKind {
  input,       // network input signal
  lift,        // Signal -> DirectionalSignal
  dir_layer,   // DirectionalSignal -> DirectionalSignal (param)
  gc_layer,    // Signal -> Signal (param)
  amp,         // angular max pool, DirectionalSignal -> Signal
  pool,        // level L -> L+1 (either signal kind)
  unpool,      // level L+1 -> L (either signal kind)
  res_add,     // in0 + in1, same shape
  concat,      // channel concatenation of in0 and in1
  global_avg,  // area-weighted average over vertices -> 1-row Signal
  dense        // row-wise affine map (param)
};

struct Node {
  OpKind kind = OpKind::input;
  int in0 = -1;    // producing node index
  int in1 = -1;    // second input (res_add, concat)
  int level = 0;   // mesh level the node operates on; for pool/unpool the
                   // simplification map index (fine level)
  int param = -1;  // index into conv or dense parameter arrays
};

// One mesh level's precomputed context.
struct LevelData {
  const TriangleMesh* mesh = nullptr;
  const WindowTensors* tensors = nullptr;
  std::vector<double> areas; // per-vertex areas
};

struct NetContext {
  std::vector<LevelData> levels;
  std::vector<const SimplificationMap*> maps; // maps[L] : level L -> level L+1
};

// Either a per-vertex or a directional activation.
struct Value {
  bool is_dir = false;
  Signal s;
  DirectionalSignal d;
};

struct Workspace {
  std::vector<Value> vals;
  std::vector<std::vector<double>> pre;  // pre-activations (dir_layer, gc_layer)
  std::vector<std::vector<int>> argmax;  // winning bins (amp, gc_layer)
};

struct Grads {
  std::vector<LayerParams> conv;
  std::vector<DenseParams> dense;

  void zero();
  void add(const Grads& other);
};

struct ArchConfig {
  std::string kind = "resnet";   // "resnet" | "uresnet"
  std::string model = "mdgcnn";  // "mdgcnn" (directional) | "gcnn" (rotation-max)
  int n_rho = 2;
  int n_theta = 8;
  int width = 12;  // filters of the first stack; doubled after each pooling
  int stacks = 1;  // resnet: stacks separated by pooling; uresnet: depth (levels)
  int blocks = 1;  // residual blocks per stack
  int n_classes = 2;
  std::string activation = "relu";
  std::uint64_t seed = 1;
};

class Network {
 public:
  std::vector<Node> nodes;
  std::vector<LayerParams> conv;
  std::vector<DenseParams> dense;
  int in_ch = 0;
  ArchConfig arch;

  // Runs the graph; logits are the last node's signal. Workspace holds every
  // intermediate needed by backward.
  Signal forward(const Signal& input, const NetContext& ctx, Workspace* ws) const;

  // Accumulates parameter gradients for one sample given d(logits).
  void backward(const Signal& dlogits, const NetContext& ctx, const Workspace& ws,
                Grads* grads) const;

  Grads make_grads() const;
  void check(const NetContext& ctx) const; // validates levels/maps availability
};

Network build_resnet(int in_ch, const ArchConfig& cfg);
Network build_uresnet(int in_ch, const ArchConfig& cfg);
Network build_network(int in_ch, const ArchConfig& cfg);

// Row-wise softmax.
Signal softmax_rows(const Signal& logits);

// Mean softmax cross-entropy over rows; fills dlogits (softmax - onehot) / rows
// when requested.
double cross_entropy(const Signal& logits, const std::vector<int>& labels,
                     Signal* dlogits = nullptr);

struct Dataset {
  std::vector<Signal> xs;
  std::vector<int> ys;
  std::vector<int> split; // 0 = train, 1 = validation
};

struct TrainConfig {
  int epochs = 10;
  int batch = 10;
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::string log_path; // per-epoch metrics CSV; empty = no log
  bool verbose = false;
};

struct TrainResult {
  double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
  int epochs_run = 0;
};

// Mini-batch ADAM. Per-sample gradients are reduced in sample order, so the
// result is identical for any thread count.
TrainResult train(Network& net, const NetContext& ctx, const Dataset& data,
                  const TrainConfig& cfg);

double evaluate(const Network& net, const NetContext& ctx, const Dataset& data,
                int split_flag, double* loss_out = nullptr);

void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

} // namespace mdgc
