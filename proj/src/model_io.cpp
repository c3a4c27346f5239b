#include "csaseg/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

namespace csaseg {

bool WeightContainer::has(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return true;
    return false;
}

const ContainerEntry& WeightContainer::get(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw ModelError("weight container: missing entry '" + name + "'");
}

void WeightContainer::add_tensor(const std::string& name, const Tensor& t) {
    ContainerEntry e;
    e.name = name;
    e.dtype = EntryDtype::Float32;
    e.dims = t.shape();
    e.floats.assign(t.data(), t.data() + t.numel());
    entries.push_back(std::move(e));
}

void WeightContainer::add_bytes(const std::string& name, const std::string& data) {
    ContainerEntry e;
    e.name = name;
    e.dtype = EntryDtype::Bytes;
    e.dims = {int64_t(data.size())};
    e.bytes.assign(data.begin(), data.end());
    entries.push_back(std::move(e));
}

// --- serialization ---------------------------------------------------------

static void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xff));
    out.push_back(uint8_t(v >> 8));
}

static void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

std::vector<uint8_t> serialize_container(const WeightContainer& c) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kContainerMagic.begin(), kContainerMagic.end());
    put_u32(out, kContainerVersion);
    put_u32(out, uint32_t(c.entries.size()));
    for (const auto& e : c.entries) {
        if (e.name.empty() || e.name.size() > 0xffff)
            throw FormatError("entry name length out of range");
        if (e.dims.empty() || e.dims.size() > 8)
            throw FormatError("entry '" + e.name + "' must have 1..8 dims");
        put_u16(out, uint16_t(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(uint8_t(e.dtype));
        out.push_back(uint8_t(e.dims.size()));
        int64_t numel = 1;
        for (int64_t d : e.dims) {
            if (d < 1 || d > 0xffffffffLL)
                throw FormatError("entry '" + e.name + "' has invalid dim");
            put_u32(out, uint32_t(d));
            numel *= d;
        }
        if (e.dtype == EntryDtype::Float32) {
            if (int64_t(e.floats.size()) != numel)
                throw FormatError("entry '" + e.name + "' payload does not match dims");
            for (float f : e.floats) put_u32(out, std::bit_cast<uint32_t>(f));
        } else {
            if (int64_t(e.bytes.size()) != numel)
                throw FormatError("entry '" + e.name + "' payload does not match dims");
            out.insert(out.end(), e.bytes.begin(), e.bytes.end());
        }
    }
    return out;
}

// bounds-checked cursor over an untrusted byte buffer
struct Reader {
    const uint8_t* p;
    size_t size;
    size_t pos = 0;

    void need(size_t n, const char* what) const {
        if (pos + n > size)
            throw FormatError(std::string("container truncated while reading ") + what);
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return p[pos++];
    }
    uint16_t u16(const char* what) {
        need(2, what);
        const uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

WeightContainer parse_container(const std::vector<uint8_t>& bytes) {
    Reader r{bytes.data(), bytes.size()};
    r.need(4, "magic");
    if (std::memcmp(r.p, kContainerMagic.data(), 4) != 0)
        throw FormatError("bad container magic");
    r.pos = 4;
    const uint32_t version = r.u32("version");
    if (version != kContainerVersion)
        throw FormatError("unsupported container version " + std::to_string(version));
    const uint32_t count = r.u32("entry count");
    if (count > 1000000) throw FormatError("entry count implausibly large");

    WeightContainer c;
    c.entries.reserve(count);
    std::set<std::string> seen;
    for (uint32_t i = 0; i < count; ++i) {
        ContainerEntry e;
        const uint16_t name_len = r.u16("name length");
        if (name_len == 0) throw FormatError("empty entry name");
        r.need(name_len, "entry name");
        e.name.assign(reinterpret_cast<const char*>(r.p + r.pos), name_len);
        r.pos += name_len;
        if (!seen.insert(e.name).second)
            throw FormatError("duplicate entry '" + e.name + "'");

        const uint8_t dtype = r.u8("dtype");
        if (dtype > 1) throw FormatError("entry '" + e.name + "' has unknown dtype " +
                                         std::to_string(dtype));
        e.dtype = EntryDtype(dtype);
        const uint8_t ndim = r.u8("rank");
        if (ndim < 1 || ndim > 8)
            throw FormatError("entry '" + e.name + "' has unsupported rank " + std::to_string(ndim));
        int64_t numel = 1;
        for (uint8_t d = 0; d < ndim; ++d) {
            const uint32_t ext = r.u32("dim");
            if (ext == 0) throw FormatError("entry '" + e.name + "' has zero dim");
            if (numel > (int64_t(1) << 40) / ext)
                throw FormatError("entry '" + e.name + "' is implausibly large");
            e.dims.push_back(int64_t(ext));
            numel *= ext;
        }
        if (e.dtype == EntryDtype::Float32) {
            r.need(size_t(numel) * 4, "float payload");
            e.floats.resize(size_t(numel));
            for (int64_t j = 0; j < numel; ++j) {
                uint32_t v = 0;
                for (int b = 0; b < 4; ++b) v |= uint32_t(r.p[r.pos + b]) << (8 * b);
                r.pos += 4;
                e.floats[size_t(j)] = std::bit_cast<float>(v);
            }
        } else {
            r.need(size_t(numel), "byte payload");
            e.bytes.assign(r.p + r.pos, r.p + r.pos + numel);
            r.pos += size_t(numel);
        }
        c.entries.push_back(std::move(e));
    }
    if (r.pos != r.size)
        throw FormatError("container has " + std::to_string(r.size - r.pos) + " trailing bytes");
    return c;
}

WeightContainer read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure on '" + path + "'");
    return parse_container(bytes);
}

void write_container(const std::string& path, const WeightContainer& c) {
    const std::vector<uint8_t> bytes = serialize_container(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw IoError("write failure on '" + path + "'");
}

// --- model conversion ------------------------------------------------------

static Tensor need_tensor(const WeightContainer& c, const std::string& name,
                          const std::vector<int64_t>& shape) {
    const ContainerEntry& e = c.get(name);
    if (e.dtype != EntryDtype::Float32)
        throw ModelError("entry '" + name + "' must be float32");
    if (e.dims != shape) {
        std::string want = "[", got = "[";
        for (size_t i = 0; i < shape.size(); ++i) want += (i ? ", " : "") + std::to_string(shape[i]);
        for (size_t i = 0; i < e.dims.size(); ++i) got += (i ? ", " : "") + std::to_string(e.dims[i]);
        throw ModelError("entry '" + name + "': expected shape " + want + "], found " + got + "]");
    }
    return e.tensor();
}

VitModel build_model(const WeightContainer& c) {
    const ContainerEntry& cfg_entry = c.get("config");
    if (cfg_entry.dtype != EntryDtype::Float32 || cfg_entry.dims != std::vector<int64_t>{5})
        throw ModelError("entry 'config' must be a float32 [5] tensor");
    const Tensor cfg = cfg_entry.tensor();
    for (int64_t i = 0; i < 5; ++i)
        if (!std::isfinite(cfg(i)) || std::fabs(cfg(i)) > 1e6f)
            throw ModelError("entry 'config' holds an out-of-range value");

    VitModel m;
    m.config.patch_size = int64_t(std::llround(cfg(0)));
    m.config.head_count = int64_t(std::llround(cfg(1)));
    m.config.pretrain_grid_h = int64_t(std::llround(cfg(2)));
    m.config.pretrain_grid_w = int64_t(std::llround(cfg(3)));
    m.config.mlp_ratio = cfg(4);

    // remaining dimensions are taken from the tensors themselves
    const ContainerEntry& cls = c.get("cls_token");
    if (cls.dims.size() != 1) throw ModelError("entry 'cls_token' must be rank 1");
    m.config.dim = cls.dims[0];
    int64_t depth = 0;
    while (c.has("blocks." + std::to_string(depth) + ".attn.w_q")) ++depth;
    if (depth == 0) throw ModelError("weight container holds no transformer blocks");
    m.config.depth = depth;
    const ContainerEntry& vp = c.get("visual_proj");
    if (vp.dims.size() != 2) throw ModelError("entry 'visual_proj' must be rank 2");
    m.config.embed_dim_out = vp.dims[1];
    m.config.validate();

    const int64_t d = m.config.dim, p = m.config.patch_size, hidden = m.config.hidden_dim();
    m.patch_proj_w = need_tensor(c, "patch_proj.weight", {d, 3 * p * p});
    m.patch_proj_b = need_tensor(c, "patch_proj.bias", {d});
    m.cls_token = need_tensor(c, "cls_token", {d});
    m.pos_embed = need_tensor(c, "pos_embed",
                              {1 + m.config.pretrain_grid_h * m.config.pretrain_grid_w, d});
    if (c.has("pre_norm.gain") || c.has("pre_norm.bias")) {
        m.has_pre_norm = true;
        m.pre_norm.gain = need_tensor(c, "pre_norm.gain", {d});
        m.pre_norm.bias = need_tensor(c, "pre_norm.bias", {d});
    }
    for (int64_t i = 0; i < depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        BlockWeights blk;
        blk.norm1.gain = need_tensor(c, b + "norm1.gain", {d});
        blk.norm1.bias = need_tensor(c, b + "norm1.bias", {d});
        blk.attn.w_q = need_tensor(c, b + "attn.w_q", {d, d});
        blk.attn.b_q = need_tensor(c, b + "attn.b_q", {d});
        blk.attn.w_k = need_tensor(c, b + "attn.w_k", {d, d});
        blk.attn.b_k = need_tensor(c, b + "attn.b_k", {d});
        blk.attn.w_v = need_tensor(c, b + "attn.w_v", {d, d});
        blk.attn.b_v = need_tensor(c, b + "attn.b_v", {d});
        blk.attn.w_o = need_tensor(c, b + "attn.w_o", {d, d});
        blk.attn.b_o = need_tensor(c, b + "attn.b_o", {d});
        blk.attn.head_count = m.config.head_count;
        blk.norm2.gain = need_tensor(c, b + "norm2.gain", {d});
        blk.norm2.bias = need_tensor(c, b + "norm2.bias", {d});
        blk.mlp_in_w = need_tensor(c, b + "mlp_in.weight", {hidden, d});
        blk.mlp_in_b = need_tensor(c, b + "mlp_in.bias", {hidden});
        blk.mlp_out_w = need_tensor(c, b + "mlp_out.weight", {d, hidden});
        blk.mlp_out_b = need_tensor(c, b + "mlp_out.bias", {d});
        m.blocks.push_back(std::move(blk));
    }
    m.final_norm.gain = need_tensor(c, "final_norm.gain", {d});
    m.final_norm.bias = need_tensor(c, "final_norm.bias", {d});
    m.visual_proj = need_tensor(c, "visual_proj", {d, m.config.embed_dim_out});
    m.validate();
    return m;
}

ClassEmbeddingSet build_classes(const WeightContainer& c) {
    const ContainerEntry& embeds = c.get("class_embeds");
    if (embeds.dtype != EntryDtype::Float32 || embeds.dims.size() != 2)
        throw ModelError("entry 'class_embeds' must be a float32 matrix");
    const ContainerEntry& names_entry = c.get("class_names");
    if (names_entry.dtype != EntryDtype::Bytes)
        throw ModelError("entry 'class_names' must be raw bytes");

    std::vector<std::string> names;
    std::string cur;
    for (uint8_t b : names_entry.bytes) {
        if (b == '\n') {
            names.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(char(b));
        }
    }
    if (!cur.empty()) names.push_back(cur);
    if (int64_t(names.size()) != embeds.dims[0])
        throw ModelError("class_names lists " + std::to_string(names.size()) +
                         " names for " + std::to_string(embeds.dims[0]) + " embeddings");
    return ClassEmbeddingSet::make(std::move(names), embeds.tensor());
}

WeightContainer to_container(const VitModel& m, const ClassEmbeddingSet* classes) {
    m.validate();
    WeightContainer c;
    c.add_tensor("config", Tensor({5}, {float(m.config.patch_size), float(m.config.head_count),
                                        float(m.config.pretrain_grid_h),
                                        float(m.config.pretrain_grid_w), m.config.mlp_ratio}));
    c.add_tensor("patch_proj.weight", m.patch_proj_w);
    c.add_tensor("patch_proj.bias", m.patch_proj_b);
    c.add_tensor("cls_token", m.cls_token);
    c.add_tensor("pos_embed", m.pos_embed);
    if (m.has_pre_norm) {
        c.add_tensor("pre_norm.gain", m.pre_norm.gain);
        c.add_tensor("pre_norm.bias", m.pre_norm.bias);
    }
    for (size_t i = 0; i < m.blocks.size(); ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        const BlockWeights& blk = m.blocks[i];
        c.add_tensor(b + "norm1.gain", blk.norm1.gain);
        c.add_tensor(b + "norm1.bias", blk.norm1.bias);
        c.add_tensor(b + "attn.w_q", blk.attn.w_q);
        c.add_tensor(b + "attn.b_q", blk.attn.b_q);
        c.add_tensor(b + "attn.w_k", blk.attn.w_k);
        c.add_tensor(b + "attn.b_k", blk.attn.b_k);
        c.add_tensor(b + "attn.w_v", blk.attn.w_v);
        c.add_tensor(b + "attn.b_v", blk.attn.b_v);
        c.add_tensor(b + "attn.w_o", blk.attn.w_o);
        c.add_tensor(b + "attn.b_o", blk.attn.b_o);
        c.add_tensor(b + "norm2.gain", blk.norm2.gain);
        c.add_tensor(b + "norm2.bias", blk.norm2.bias);
        c.add_tensor(b + "mlp_in.weight", blk.mlp_in_w);
        c.add_tensor(b + "mlp_in.bias", blk.mlp_in_b);
        c.add_tensor(b + "mlp_out.weight", blk.mlp_out_w);
        c.add_tensor(b + "mlp_out.bias", blk.mlp_out_b);
    }
    c.add_tensor("final_norm.gain", m.final_norm.gain);
    c.add_tensor("final_norm.bias", m.final_norm.bias);
    c.add_tensor("visual_proj", m.visual_proj);
    if (classes) {
        c.add_tensor("class_embeds", classes->embeds);
        std::string joined;
        for (size_t i = 0; i < classes->names.size(); ++i) {
            if (i) joined += '\n';
            joined += classes->names[i];
        }
        c.add_bytes("class_names", joined);
    }
    return c;
}

VitModel load_model(const std::string& path) { return build_model(read_container(path)); }

ClassEmbeddingSet load_classes(const std::string& path) {
    return build_classes(read_container(path));
}

void save_model(const std::string& path, const VitModel& m, const ClassEmbeddingSet* classes) {
    write_container(path, to_container(m, classes));
}

// --- NetPBM ----------------------------------------------------------------

// header token reader skipping whitespace and '#' comments
static int64_t pnm_int(std::istream& in, const std::string& path, const char* what) {
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') ch = in.get();
        } else if (!std::isspace(ch)) {
            break;
        }
        ch = in.get();
    }
    if (ch == EOF || !std::isdigit(ch))
        throw FormatError("'" + path + "': expected " + what + " in header");
    int64_t v = 0;
    while (ch != EOF && std::isdigit(ch)) {
        v = v * 10 + (ch - '0');
        if (v > 1000000000) throw FormatError("'" + path + "': " + what + " out of range");
        ch = in.get();
    }
    if (ch == EOF) throw FormatError("'" + path + "': truncated header");
    return v;
}

static void pnm_header(std::istream& in, const std::string& path, const char* magic,
                       int64_t& w, int64_t& h) {
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != magic[0] || m1 != magic[1])
        throw FormatError("'" + path + "': not a " + std::string(magic) + " file");
    w = pnm_int(in, path, "width");
    h = pnm_int(in, path, "height");
    if (w < 1 || h < 1 || w * h > 100000000)
        throw FormatError("'" + path + "': unreasonable image size");
    const int64_t maxval = pnm_int(in, path, "maxval");
    if (maxval != 255)
        throw FormatError("'" + path + "': only maxval 255 is supported, got " +
                          std::to_string(maxval));
    // pnm_int consumed exactly one whitespace byte after maxval
}

Tensor read_image_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    int64_t w = 0, h = 0;
    pnm_header(in, path, "P6", w, h);
    std::vector<uint8_t> raw(size_t(3 * w * h));
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (in.gcount() != std::streamsize(raw.size()))
        throw FormatError("'" + path + "': truncated pixel data");

    Tensor img({3, h, w});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                img(c, y, x) = (float(raw[size_t((y * w + x) * 3 + c)]) / 255.0f -
                                kImageMean[size_t(c)]) / kImageStd[size_t(c)];
    return img;
}

PixelMask read_mask_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    int64_t w = 0, h = 0;
    pnm_header(in, path, "P5", w, h);
    PixelMask mask{h, w, std::vector<uint8_t>(size_t(w * h))};
    in.read(reinterpret_cast<char*>(mask.labels.data()), std::streamsize(mask.labels.size()));
    if (in.gcount() != std::streamsize(mask.labels.size()))
        throw FormatError("'" + path + "': truncated pixel data");
    return mask;
}

void write_mask_pgm(const std::string& path, const PixelMask& mask) {
    if (mask.rows < 1 || mask.cols < 1 ||
        int64_t(mask.labels.size()) != mask.rows * mask.cols)
        throw ShapeError("mask labels do not match its extents");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P5\n" << mask.cols << " " << mask.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(mask.labels.data()),
              std::streamsize(mask.labels.size()));
    if (!out) throw IoError("write failure on '" + path + "'");
}

void write_heatmap_pgm(const std::string& path, const Tensor& map) {
    if (map.rank() != 2) throw ShapeError("heatmap must be rank 2");
    const int64_t h = map.extent(0), w = map.extent(1);
    float lo = map.data()[0], hi = map.data()[0];
    for (int64_t i = 0; i < map.numel(); ++i) {
        lo = std::min(lo, map.data()[i]);
        hi = std::max(hi, map.data()[i]);
    }
    PixelMask bytes{h, w, std::vector<uint8_t>(size_t(h * w), 0)};
    if (hi > lo) {
        const float s = 255.0f / (hi - lo);
        for (int64_t i = 0; i < map.numel(); ++i)
            bytes.labels[size_t(i)] = uint8_t(std::lround((map.data()[i] - lo) * s));
    }
    write_mask_pgm(path, bytes);
}

} // namespace csaseg
