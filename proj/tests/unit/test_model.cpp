#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sentspan/model.hpp"
#include "sentspan/rng.hpp"
#include "testutil.hpp"

using namespace sentspan;
using testutil::error_code;

namespace {

ModelConfig small_config(int vocab, int dim, int heads, int layers, int ffn, int len,
                         uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.model_dim = dim;
  cfg.num_heads = heads;
  cfg.num_layers = layers;
  cfg.ffn_dim = ffn;
  cfg.max_source_length = len;
  cfg.dropout_rate = 0.0;
  cfg.seed = seed;
  return cfg;
}

struct Input {
  std::vector<int> ids;
  std::vector<int> mask;
};

Input random_input(const ModelConfig& cfg, Rng& rng) {
  Input in;
  const int L = cfg.max_source_length;
  const int real = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(L)));
  for (int i = 0; i < L; ++i) {
    in.ids.push_back(i < real ? static_cast<int>(rng.next_below(
                                    static_cast<uint64_t>(cfg.vocab_size)))
                              : Vocab::kPad);
    in.mask.push_back(i < real ? 1 : 0);
  }
  return in;
}

}  // namespace

TEST_CASE("model configuration validation") {
  ModelConfig cfg = small_config(16, 8, 2, 1, 16, 8, 1);
  CHECK(error_code([&] { cfg.validate(); }) == "<no-throw>");

  ModelConfig bad = cfg;
  bad.model_dim = 10;  // not divisible by num_heads = 2? it is; use 3 heads
  bad.num_heads = 3;
  CHECK(error_code([&] { bad.validate(); }) == "BadConfig");

  bad = cfg;
  bad.vocab_size = 4;  // smaller than the reserved special ids
  CHECK(error_code([&] { bad.validate(); }) == "BadConfig");

  bad = cfg;
  bad.dropout_rate = 1.0;
  CHECK(error_code([&] { bad.validate(); }) == "BadConfig");

  bad = cfg;
  bad.dropout_rate = -0.1;
  CHECK(error_code([&] { bad.validate(); }) == "BadConfig");

  bad = cfg;
  bad.num_layers = 0;
  CHECK(error_code([&] { bad.validate(); }) == "BadConfig");

  bad = cfg;
  bad.max_source_length = 0;
  CHECK(error_code([&] { bad.validate(); }) == "BadConfig");
}

TEST_CASE("parameter layout is stable and fully named") {
  ModelConfig cfg = small_config(16, 8, 2, 2, 12, 6, 1);
  Params p(cfg);

  // embeddings + 12 per-layer segments + the two head segments
  CHECK(p.segments().size() == 2 + 12 * 2 + 2);
  CHECK(p.segments().front().name == "token_embedding");
  CHECK(p.segments()[1].name == "position_embedding");
  CHECK(p.segments().back().name == "head_b");

  CHECK(p.view("token_embedding").size() == 16u * 8u);
  CHECK(p.view("position_embedding").size() == 6u * 8u);
  CHECK(p.view(Params::layer_name(0, "attn_wq")).size() == 64u);
  CHECK(p.view(Params::layer_name(1, "ffn_w1")).size() == 8u * 12u);
  CHECK(p.view(Params::layer_name(1, "ffn_b1")).size() == 12u);
  CHECK(p.view("head_w").size() == 16u);
  CHECK(p.view("head_b").size() == 2u);

  // Segments tile the flat buffer exactly.
  size_t total = 0;
  for (const auto& seg : p.segments()) {
    CHECK(seg.offset == total);
    total += seg.size;
  }
  CHECK(total == p.total_size());

  CHECK(error_code([&] { p.view("no_such_segment"); }) == "Internal");
}

TEST_CASE("initialization is seeded, bounded, and structured") {
  ModelConfig cfg = small_config(16, 8, 2, 2, 12, 6, 99);
  Params a = Params::init(cfg);
  Params b = Params::init(cfg);
  CHECK(a.data() == b.data());

  ModelConfig other = cfg;
  other.seed = 100;
  CHECK(Params::init(other).data() != a.data());

  for (const auto& seg : a.segments()) {
    auto vals = a.view(seg.name);
    if (seg.name.find("_scale") != std::string::npos) {
      for (double v : vals) CHECK(v == 1.0);
    } else if (seg.shape.size() == 1) {
      for (double v : vals) CHECK(v == 0.0);  // biases and offsets
    } else {
      const double r =
          std::sqrt(6.0 / (static_cast<double>(seg.shape[0]) + static_cast<double>(seg.shape[1])));
      double lo = 0.0, hi = 0.0;
      for (double v : vals) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(lo >= -r);
      CHECK(hi <= r);
      CHECK(hi > 0.0);  // actually randomized
      CHECK(lo < 0.0);
    }
  }
}

TEST_CASE("forward rejects malformed inputs") {
  ModelConfig cfg = small_config(16, 8, 2, 1, 16, 6, 1);
  Params p = Params::init(cfg);

  std::vector<int> ids = {0, 5, 6, 2, 1, 1};
  std::vector<int> mask = {1, 1, 1, 1, 0, 0};
  CHECK(error_code([&] { forward(p, ids, mask); }) == "<no-throw>");

  std::vector<int> short_ids = {0, 5, 2};
  std::vector<int> short_mask = {1, 1, 1};
  CHECK(error_code([&] { forward(p, short_ids, short_mask); }) == "ShapeMismatch");

  std::vector<int> bad_ids = {0, 99, 6, 2, 1, 1};
  CHECK(error_code([&] { forward(p, bad_ids, mask); }) == "IdOutOfRange");
  bad_ids[1] = -3;
  CHECK(error_code([&] { forward(p, bad_ids, mask); }) == "IdOutOfRange");

  std::vector<int> none(6, 0);
  CHECK(error_code([&] { forward(p, ids, none); }) == "AllMasked");

  std::vector<int> wrong_mask = {1, 1, 1};
  CHECK(error_code([&] { forward(p, ids, wrong_mask); }) == "ShapeMismatch");
}

TEST_CASE("masked positions carry the sentinel score") {
  ModelConfig cfg = small_config(16, 8, 2, 2, 16, 8, 3);
  Params p = Params::init(cfg);
  std::vector<int> ids = {0, 5, 6, 7, 2, 1, 1, 1};
  std::vector<int> mask = {1, 1, 1, 1, 1, 0, 0, 0};
  SpanLogits out = forward(p, ids, mask);
  REQUIRE(out.start_logits.size() == 8);
  REQUIRE(out.end_logits.size() == 8);
  for (int i = 0; i < 8; ++i) {
    if (mask[static_cast<size_t>(i)] == 0) {
      CHECK(out.start_logits[static_cast<size_t>(i)] == kMaskedLogit);
      CHECK(out.end_logits[static_cast<size_t>(i)] == kMaskedLogit);
    } else {
      CHECK(std::isfinite(out.start_logits[static_cast<size_t>(i)]));
      CHECK(out.start_logits[static_cast<size_t>(i)] > kMaskedLogit / 2);
    }
  }
}

TEST_CASE("padding content cannot leak into real positions") {
  ModelConfig cfg = small_config(16, 8, 2, 2, 16, 8, 4);
  Params p = Params::init(cfg);
  std::vector<int> ids_a = {0, 5, 6, 7, 2, 1, 1, 1};
  std::vector<int> ids_b = {0, 5, 6, 7, 2, 9, 14, 3};  // garbage where mask is 0
  std::vector<int> mask = {1, 1, 1, 1, 1, 0, 0, 0};
  SpanLogits a = forward(p, ids_a, mask);
  SpanLogits b = forward(p, ids_b, mask);
  for (int i = 0; i < 5; ++i) {
    CHECK(a.start_logits[static_cast<size_t>(i)] == b.start_logits[static_cast<size_t>(i)]);
    CHECK(a.end_logits[static_cast<size_t>(i)] == b.end_logits[static_cast<size_t>(i)]);
  }
}

TEST_CASE("forward agrees with an independent recomputation") {
  std::vector<ModelConfig> configs = {
      small_config(11, 8, 2, 2, 12, 6, 17),
      small_config(9, 12, 3, 1, 7, 5, 18),
      small_config(7, 4, 1, 3, 5, 9, 19),
      small_config(24, 16, 4, 2, 24, 10, 20),
  };
  Rng rng(555);
  for (const auto& cfg : configs) {
    Params p = Params::init(cfg);
    for (int trial = 0; trial < 5; ++trial) {
      Input in = random_input(cfg, rng);
      SpanLogits got = forward(p, in.ids, in.mask);
      SpanLogits want = oracles::reference_forward(p, in.ids, in.mask);
      for (size_t i = 0; i < in.mask.size(); ++i) {
        if (in.mask[i] == 0) {
          CHECK(got.start_logits[i] == kMaskedLogit);
          continue;
        }
        const double tol_s = 1e-9 * std::max(1.0, std::abs(want.start_logits[i]));
        const double tol_e = 1e-9 * std::max(1.0, std::abs(want.end_logits[i]));
        CHECK(std::abs(got.start_logits[i] - want.start_logits[i]) <= tol_s);
        CHECK(std::abs(got.end_logits[i] - want.end_logits[i]) <= tol_e);
      }
    }
  }
}

TEST_CASE("cached and plain forward agree without dropout") {
  ModelConfig cfg = small_config(16, 8, 2, 2, 16, 8, 6);
  Params p = Params::init(cfg);
  Rng rng(8);
  Input in = random_input(cfg, rng);
  SpanLogits plain = forward(p, in.ids, in.mask);
  ForwardCache cache;
  SpanLogits cached = forward_cached(p, in.ids, in.mask, cache, nullptr);
  CHECK(plain.start_logits == cached.start_logits);
  CHECK(plain.end_logits == cached.end_logits);
  CHECK(cache.hidden.size() == 8u * 8u);
  CHECK(cache.layers.size() == 2);
}

TEST_CASE("dropout masks are inverted, seeded, and training-only") {
  ModelConfig cfg = small_config(16, 8, 2, 1, 16, 8, 6);
  cfg.dropout_rate = 0.5;
  Params p = Params::init(cfg);
  Rng rng(8);
  Input in = random_input(cfg, rng);

  ForwardCache cache;
  Rng d1(42);
  SpanLogits with_drop = forward_cached(p, in.ids, in.mask, cache, &d1);
  REQUIRE(cache.layers[0].drop_mask1.size() == 8u * 8u);
  const double keep = 1.0 / (1.0 - cfg.dropout_rate);
  int zeros = 0;
  for (double m : cache.layers[0].drop_mask1) {
    CHECK((m == 0.0 || m == keep));
    zeros += m == 0.0;
  }
  CHECK(zeros > 0);
  CHECK(zeros < 64);

  // Same seed, same draw sequence, same masks and logits.
  ForwardCache cache2;
  Rng d2(42);
  SpanLogits again = forward_cached(p, in.ids, in.mask, cache2, &d2);
  CHECK(again.start_logits == with_drop.start_logits);
  CHECK(cache2.layers[0].drop_mask1 == cache.layers[0].drop_mask1);
  CHECK(cache2.layers[0].drop_mask2 == cache.layers[0].drop_mask2);

  // No RNG: inference path, no masks recorded.
  ForwardCache cache3;
  SpanLogits off = forward_cached(p, in.ids, in.mask, cache3, nullptr);
  CHECK(cache3.layers[0].drop_mask1.empty());
  CHECK(off.start_logits == forward(p, in.ids, in.mask).start_logits);
}

TEST_CASE("batched forward is an element-wise map") {
  auto pc = testutil::prepare_corpus(testutil::table1_examples(), 48);
  ModelConfig cfg = testutil::toy_config(pc.vocab.size(), 48);
  Params p = Params::init(cfg);
  auto batch_logits = forward_batch(p, pc.examples);
  REQUIRE(batch_logits.size() == pc.examples.size());
  for (size_t i = 0; i < pc.examples.size(); ++i) {
    SpanLogits single = forward(p, pc.examples[i].source_ids, pc.examples[i].source_mask);
    CHECK(batch_logits[i].start_logits == single.start_logits);
    CHECK(batch_logits[i].end_logits == single.end_logits);
  }
}

TEST_CASE("checkpoints round-trip every weight exactly") {
  ModelConfig cfg = small_config(16, 8, 2, 2, 12, 6, 31);
  Params p = Params::init(cfg);
  const std::string dir = testutil::fresh_dir("ckpt");
  const std::string path = dir + "/model.json";
  save_checkpoint(p, path);

  Params loaded = load_checkpoint(path);
  CHECK(loaded.config() == cfg);
  CHECK(loaded.data() == p.data());

  // Serialization is byte-stable.
  const std::string path2 = dir + "/model2.json";
  save_checkpoint(loaded, path2);
  CHECK(testutil::read_file(path2) == testutil::read_file(path));
}

TEST_CASE("checkpoint loading rejects damage and mismatches") {
  ModelConfig cfg = small_config(16, 8, 2, 1, 12, 6, 32);
  Params p = Params::init(cfg);
  const std::string dir = testutil::fresh_dir("ckpt");
  const std::string path = dir + "/model.json";
  save_checkpoint(p, path);

  CHECK(error_code([&] { load_checkpoint(dir + "/absent.json"); }) == "IoError");

  testutil::write_file(dir + "/garbage.json", "{ not json");
  CHECK(error_code([&] { load_checkpoint(dir + "/garbage.json"); }) == "ParseError");

  testutil::write_file(dir + "/wrongformat.json", "{\"format\":\"something-else\"}");
  CHECK(error_code([&] { load_checkpoint(dir + "/wrongformat.json"); }) == "ParseError");

  CHECK(error_code([&] { load_checkpoint_checked(path, cfg); }) == "<no-throw>");
  ModelConfig other = cfg;
  other.model_dim = 16;
  other.ffn_dim = 24;
  CHECK(error_code([&] { load_checkpoint_checked(path, other); }) == "ShapeMismatch");

  // Differences in non-shape settings (dropout, seed) are acceptable.
  ModelConfig trained_elsewhere = cfg;
  trained_elsewhere.dropout_rate = 0.3;
  trained_elsewhere.seed = 777;
  CHECK(error_code([&] { load_checkpoint_checked(path, trained_elsewhere); }) == "<no-throw>");
}
