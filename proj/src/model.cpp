// Copyright 2026 The p3sync Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "p3/model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace p3 {

namespace {

std::string layer_label(const LayerSpec& layer) {
  std::ostringstream os;
  os << "layer " << layer.index;
  if (!layer.name.empty()) os << " (" << layer.name << ")";
  return os.str();
}

class ProfileBuilder {
 public:
  ProfileBuilder(std::string name, uint64_t seed) {
    profile_.name = std::move(name);
    profile_.seed = seed;
  }

  ProfileBuilder& add(std::string name, uint64_t params, uint64_t fwd,
                      uint64_t bwd) {
    LayerSpec layer;
    layer.index = static_cast<uint32_t>(profile_.layers.size());
    layer.name = std::move(name);
    layer.param_count = params;
    layer.fwd_time = fwd;
    layer.bwd_time = bwd;
    profile_.layers.push_back(std::move(layer));
    return *this;
  }

  ModelProfile build() {
    validate(profile_);
    return std::move(profile_);
  }

 private:
  ModelProfile profile_;
};

ModelProfile make_toy3() {
  return ProfileBuilder("toy3", 1)
      .add("l0", 10, 1000, 1000)
      .add("l1", 10, 1000, 1000)
      .add("l2", 10, 1000, 1000)
      .build();
}

// Conv stack of a 19-layer VGG with its three FC layers; the first FC layer
// carries 71.5% of all parameters. Conv layers dominate compute.
ModelProfile make_vgg19_like() {
  ProfileBuilder b("vgg19-like", 19);
  const uint64_t conv_fwd = 3000;
  const uint64_t conv_bwd = 6000;
  b.add("conv1_1", 1792, conv_fwd, conv_bwd);
  b.add("conv1_2", 36928, conv_fwd, conv_bwd);
  b.add("conv2_1", 73856, conv_fwd, conv_bwd);
  b.add("conv2_2", 147584, conv_fwd, conv_bwd);
  b.add("conv3_1", 295168, conv_fwd, conv_bwd);
  for (int i = 2; i <= 4; ++i)
    b.add("conv3_" + std::to_string(i), 590080, conv_fwd, conv_bwd);
  b.add("conv4_1", 1180160, conv_fwd, conv_bwd);
  for (int i = 2; i <= 4; ++i)
    b.add("conv4_" + std::to_string(i), 2359808, conv_fwd, conv_bwd);
  for (int i = 1; i <= 4; ++i)
    b.add("conv5_" + std::to_string(i), 2359808, conv_fwd, conv_bwd);
  b.add("fc6", 102764544, 400, 800);
  b.add("fc7", 16781312, 400, 800);
  b.add("fc8", 4097000, 400, 800);
  return b.build();
}

// Bottleneck-block layout: many small convolutions, final FC heavier than
// almost every conv layer.
ModelProfile make_resnet50_like() {
  ProfileBuilder b("resnet50-like", 50);
  auto conv1x1 = [&](const std::string& name, uint64_t in, uint64_t out) {
    b.add(name, in * out, 300, 600);
  };
  auto conv3x3 = [&](const std::string& name, uint64_t ch) {
    b.add(name, 9 * ch * ch, 600, 1200);
  };
  b.add("conv1", 7 * 7 * 3 * 64, 800, 1600);
  struct Stage {
    uint64_t width;
    int blocks;
  };
  const Stage stages[] = {{64, 3}, {128, 4}, {256, 6}, {512, 3}};
  uint64_t in_ch = 64;
  int stage_no = 2;
  for (const Stage& s : stages) {
    const uint64_t out_ch = s.width * 4;
    for (int blk = 0; blk < s.blocks; ++blk) {
      const std::string p =
          "res" + std::to_string(stage_no) + char('a' + blk) + "_";
      conv1x1(p + "branch2a", in_ch, s.width);
      conv3x3(p + "branch2b", s.width);
      conv1x1(p + "branch2c", s.width, out_ch);
      if (blk == 0) conv1x1(p + "branch1", in_ch, out_ch);
      in_ch = out_ch;
    }
    ++stage_no;
  }
  b.add("fc1000", 2048 * 1000 + 1000, 200, 400);
  return b.build();
}

// Encoder/decoder translation model whose source embedding (the first
// layer) is the heaviest.
ModelProfile make_sockeye_like() {
  ProfileBuilder b("sockeye-like", 7);
  b.add("source_embed", 32000 * 512, 200, 400);
  for (int i = 0; i < 4; ++i)
    b.add("encoder_rnn_" + std::to_string(i), 2099200, 1000, 2000);
  b.add("target_embed", 16000 * 512, 200, 400);
  b.add("attention", 524800, 500, 1000);
  b.add("decoder_rnn_0", 3147776, 1000, 2000);
  for (int i = 1; i < 4; ++i)
    b.add("decoder_rnn_" + std::to_string(i), 2099200, 1000, 2000);
  b.add("output_proj", 512 * 16000 + 16000, 800, 1600);
  return b.build();
}

template <typename T>
T required(const nlohmann::json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ProfileError(ctx + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ProfileError(ctx + ": bad field '" + key + "': " + e.what());
  }
}

}  // namespace

void validate(const ModelProfile& profile) {
  if (profile.layers.empty())
    throw ProfileError("profile '" + profile.name + "' has no layers");
  for (size_t i = 0; i < profile.layers.size(); ++i) {
    const LayerSpec& layer = profile.layers[i];
    if (layer.index != i)
      throw ProfileError(layer_label(layer) + ": index does not match position " +
                         std::to_string(i));
    if (layer.param_count == 0)
      throw ProfileError(layer_label(layer) + ": param_count must be >= 1");
  }
}

uint64_t total_params(const ModelProfile& profile) {
  return std::accumulate(
      profile.layers.begin(), profile.layers.end(), uint64_t{0},
      [](uint64_t acc, const LayerSpec& l) { return acc + l.param_count; });
}

uint32_t heaviest_layer(const ModelProfile& profile) {
  auto it = std::max_element(profile.layers.begin(), profile.layers.end(),
                             [](const LayerSpec& a, const LayerSpec& b) {
                               return a.param_count < b.param_count;
                             });
  return it == profile.layers.end() ? 0 : it->index;
}

ModelProfile profile_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ProfileError("profile: expected a JSON object");
  ModelProfile profile;
  profile.name = required<std::string>(doc, "name", "profile");
  profile.seed = required<uint64_t>(doc, "seed", "profile");
  auto layers = doc.find("layers");
  if (layers == doc.end() || !layers->is_array())
    throw ProfileError("profile: missing 'layers' array");

  std::vector<LayerSpec> parsed;
  for (size_t i = 0; i < layers->size(); ++i) {
    const auto& l = (*layers)[i];
    const std::string ctx = "layers[" + std::to_string(i) + "]";
    if (!l.is_object()) throw ProfileError(ctx + ": expected an object");
    LayerSpec spec;
    spec.index = required<uint32_t>(l, "index", ctx);
    spec.name = l.value("name", std::string{});
    spec.param_count = required<uint64_t>(l, "param_count", ctx);
    spec.fwd_time = required<uint64_t>(l, "fwd_time", ctx);
    spec.bwd_time = required<uint64_t>(l, "bwd_time", ctx);
    parsed.push_back(std::move(spec));
  }

  std::set<uint32_t> seen;
  for (const LayerSpec& l : parsed) {
    if (!seen.insert(l.index).second)
      throw ProfileError(layer_label(l) + ": duplicate index");
  }
  std::sort(parsed.begin(), parsed.end(),
            [](const LayerSpec& a, const LayerSpec& b) { return a.index < b.index; });
  for (size_t i = 0; i < parsed.size(); ++i) {
    if (parsed[i].index != i)
      throw ProfileError(layer_label(parsed[i]) + ": index gap, expected layer " +
                         std::to_string(i));
  }
  profile.layers = std::move(parsed);
  validate(profile);
  return profile;
}

nlohmann::json profile_to_json(const ModelProfile& profile) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : profile.layers) {
    layers.push_back({{"index", l.index},
                      {"name", l.name},
                      {"param_count", l.param_count},
                      {"fwd_time", l.fwd_time},
                      {"bwd_time", l.bwd_time}});
  }
  return {{"name", profile.name}, {"seed", profile.seed}, {"layers", layers}};
}

ModelProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ProfileError("cannot open profile " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ProfileError(path.string() + ": parse error: " + e.what());
  }
  return profile_from_json(doc);
}

void save_profile(const ModelProfile& profile,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ProfileError("cannot write profile " + path.string());
  out << profile_to_json(profile).dump(2) << '\n';
}

const std::vector<std::string>& builtin_profile_names() {
  static const std::vector<std::string> names = {"toy3", "resnet50-like",
                                                 "vgg19-like", "sockeye-like"};
  return names;
}

ModelProfile builtin_profile(std::string_view name) {
  if (name == "toy3") return make_toy3();
  if (name == "resnet50-like") return make_resnet50_like();
  if (name == "vgg19-like") return make_vgg19_like();
  if (name == "sockeye-like") return make_sockeye_like();
  throw ProfileError("unknown builtin profile '" + std::string(name) + "'");
}

ModelProfile scale_profile(const ModelProfile& profile, uint64_t divisor) {
  if (divisor == 0) throw ProfileError("scale divisor must be >= 1");
  ModelProfile scaled = profile;
  for (LayerSpec& l : scaled.layers) {
    l.param_count = std::max<uint64_t>(1, (l.param_count + divisor / 2) / divisor);
  }
  return scaled;
}

}  // namespace p3
