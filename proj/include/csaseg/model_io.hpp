#pragma once

#include "csaseg/classifier.hpp"
#include "csaseg/mask.hpp"
#include "csaseg/tensor.hpp"
#include "csaseg/vit.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace csaseg {

/*
  Weight container, all multi-byte values little-endian:

    magic    4 bytes  "SCWT"
    version  u32      currently 1, unknown versions are rejected
    count    u32      number of entries
    entry, repeated count times:
      name_len  u16
      name      name_len bytes of UTF-8
      dtype     u8      0 = float32, 1 = raw bytes
      ndim      u8      1..8
      dims      u32 * ndim, each >= 1
      payload   4*prod(dims) bytes for float32, prod(dims) bytes for raw

  Nothing may follow the last entry. Every structural violation (bad magic,
  unknown version or dtype, short reads, oversized dims, duplicate names,
  trailing bytes) raises FormatError naming the problem.

  Model manifest written by save_model / expected by build_model:
    config                          f32 [5]: patch size, head count,
                                    pretrain grid h, pretrain grid w, mlp ratio
    patch_proj.weight               f32 [d, 3*p*p]   (patch pixels channel-major)
    patch_proj.bias                 f32 [d]
    cls_token                       f32 [d]
    pos_embed                       f32 [1 + gh*gw, d]
    pre_norm.gain/.bias             f32 [d]          (optional pair, applied
                                    between pos_embed and the first block)
    blocks.{i}.norm1.gain/.bias     f32 [d]
    blocks.{i}.attn.w_q/w_k/w_v/w_o f32 [d, d]       (math convention, y = x*W)
    blocks.{i}.attn.b_q/b_k/b_v/b_o f32 [d]
    blocks.{i}.norm2.gain/.bias     f32 [d]
    blocks.{i}.mlp_in.weight        f32 [hidden, d]
    blocks.{i}.mlp_in.bias          f32 [hidden]
    blocks.{i}.mlp_out.weight       f32 [d, hidden]
    blocks.{i}.mlp_out.bias         f32 [d]
    final_norm.gain/.bias           f32 [d]
    visual_proj                     f32 [d, d']
    class_embeds                    f32 [c, d']      (optional pair)
    class_names                     bytes, newline-joined UTF-8
*/

inline constexpr std::array<char, 4> kContainerMagic{'S', 'C', 'W', 'T'};
inline constexpr uint32_t kContainerVersion = 1;

enum class EntryDtype : uint8_t { Float32 = 0, Bytes = 1 };

struct ContainerEntry {
    std::string name;
    EntryDtype dtype = EntryDtype::Float32;
    std::vector<int64_t> dims;
    std::vector<float> floats;   // dtype Float32
    std::vector<uint8_t> bytes;  // dtype Bytes

    Tensor tensor() const { return Tensor(dims, floats); }
};

struct WeightContainer {
    std::vector<ContainerEntry> entries;

    bool has(const std::string& name) const;
    const ContainerEntry& get(const std::string& name) const;
    void add_tensor(const std::string& name, const Tensor& t);
    void add_bytes(const std::string& name, const std::string& data);
};

std::vector<uint8_t> serialize_container(const WeightContainer& c);
WeightContainer parse_container(const std::vector<uint8_t>& bytes);

WeightContainer read_container(const std::string& path);
void write_container(const std::string& path, const WeightContainer& c);

// model <-> container conversion; entries are written in manifest order so
// a load/save round trip is byte-identical
VitModel build_model(const WeightContainer& c);
ClassEmbeddingSet build_classes(const WeightContainer& c);
WeightContainer to_container(const VitModel& m, const ClassEmbeddingSet* classes = nullptr);

VitModel load_model(const std::string& path);
ClassEmbeddingSet load_classes(const std::string& path);
void save_model(const std::string& path, const VitModel& m,
                const ClassEmbeddingSet* classes = nullptr);

// channel statistics applied to every input image: x = (v/255 - mean) / std
inline constexpr std::array<float, 3> kImageMean{0.48145466f, 0.4578275f, 0.40821073f};
inline constexpr std::array<float, 3> kImageStd{0.26862954f, 0.26130258f, 0.27577711f};

// binary P6 at maxval 255, returned channel-normalized as [3 x h x w]
Tensor read_image_ppm(const std::string& path);

// binary P5 at maxval 255; labels are raw byte values
PixelMask read_mask_pgm(const std::string& path);
void write_mask_pgm(const std::string& path, const PixelMask& mask);

// single-channel map min-max scaled to 0..255 (all zeros if constant)
void write_heatmap_pgm(const std::string& path, const Tensor& map);

} // namespace csaseg
