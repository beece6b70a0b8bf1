#include "h2s/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "h2s/io_util.hpp"

namespace h2s {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

struct ByteReader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    bool has(std::size_t n) const { return pos + n <= bytes.size(); }

    std::uint16_t u16() {
        if (!has(2)) throw MalformedWav("truncated wav");
        const std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }

    std::uint32_t u32() {
        if (!has(4)) throw MalformedWav("truncated wav");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }

    void fourcc(char out[4]) {
        if (!has(4)) throw MalformedWav("truncated wav");
        std::memcpy(out, bytes.data() + pos, 4);
        pos += 4;
    }

    void skip(std::size_t n) {
        if (!has(n)) throw MalformedWav("truncated wav");
        pos += n;
    }
};

bool fourcc_is(const char c[4], const char* s) { return std::memcmp(c, s, 4) == 0; }

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip, std::uint16_t format_tag,
                                     std::span<const std::uint8_t> payload,
                                     std::uint16_t bits_per_sample) {
    const std::uint16_t channels = 1;
    const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits_per_sample / 8);
    std::vector<std::uint8_t> out;
    out.reserve(44 + payload.size());
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    append_u32(out, static_cast<std::uint32_t>(36 + payload.size()));
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    append_u32(out, 16);
    append_u16(out, format_tag);
    append_u16(out, channels);
    append_u32(out, clip.sample_rate);
    append_u32(out, clip.sample_rate * block_align);
    append_u16(out, block_align);
    append_u16(out, bits_per_sample);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    append_u32(out, static_cast<std::uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

}  // namespace

void IngestConfig::validate() const {
    if (target_sample_rate == 0) throw ConfigError("target_sample_rate must be > 0");
    if (!(max_wav_value > 0)) throw ConfigError("max_wav_value must be > 0");
    if (!(min_duration > 0)) throw ConfigError("min_duration must be > 0");
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes, const IngestConfig& cfg,
                     const std::string& source_id) {
    ByteReader r{bytes};

    char id[4];
    r.fourcc(id);
    if (!fourcc_is(id, "RIFF")) throw MalformedWav("not a RIFF file");
    r.u32();  // riff chunk size; unreliable in the wild, data chunk is authoritative
    r.fourcc(id);
    if (!fourcc_is(id, "WAVE")) throw MalformedWav("not a WAVE file");

    bool have_fmt = false;
    std::uint16_t format_tag = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    std::span<const std::uint8_t> data;
    bool have_data = false;

    while (r.has(8)) {
        r.fourcc(id);
        const std::uint32_t size = r.u32();
        if (fourcc_is(id, "fmt ")) {
            if (size < 16) throw MalformedWav("fmt chunk too small");
            const std::size_t next = r.pos + size + (size % 2);
            format_tag = r.u16();
            channels = r.u16();
            sample_rate = r.u32();
            r.u32();  // byte rate
            r.u16();  // block align
            bits = r.u16();
            if (next > bytes.size()) throw MalformedWav("truncated fmt chunk");
            r.pos = next;
            have_fmt = true;
        } else if (fourcc_is(id, "data")) {
            if (!r.has(size)) throw MalformedWav("truncated data chunk");
            data = bytes.subspan(r.pos, size);
            have_data = true;
            r.skip(size + (size % 2 && r.has(size + 1) ? 1 : 0));
        } else {
            r.skip(size + (size % 2 && r.has(size + 1) ? 1 : 0));
        }
    }
    if (!have_fmt) throw MalformedWav("missing fmt chunk");
    if (!have_data) throw MalformedWav("missing data chunk");
    if (channels == 0) throw MalformedWav("zero channels");
    if (sample_rate == 0) throw MalformedWav("zero sample rate");

    const bool pcm16 = format_tag == kFormatPcm && bits == 16;
    const bool f32 = format_tag == kFormatIeeeFloat && bits == 32;
    if (!pcm16 && !f32) {
        throw UnsupportedEncoding("only PCM16 and IEEE float32 are supported (format " +
                                  std::to_string(format_tag) + ", " + std::to_string(bits) +
                                  " bits)");
    }

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_size = bytes_per_sample * channels;
    const std::size_t n_frames = data.size() / frame_size;

    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.source_id = source_id;
    clip.samples.resize(n_frames);

    for (std::size_t t = 0; t < n_frames; ++t) {
        double acc = 0.0;
        const std::uint8_t* frame = data.data() + t * frame_size;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::uint8_t* p = frame + c * bytes_per_sample;
            if (pcm16) {
                const std::int16_t s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
                acc += static_cast<double>(s) / cfg.max_wav_value;
            } else {
                std::uint32_t u = 0;
                for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
                float v;
                std::memcpy(&v, &u, 4);
                acc += static_cast<double>(v);
            }
        }
        clip.samples[t] = static_cast<float>(acc / channels);
    }

    if (clip.samples.empty() || clip.duration() < cfg.min_duration) {
        throw TooShort("clip is " + std::to_string(clip.duration()) + " s, minimum is " +
                       std::to_string(cfg.min_duration) + " s");
    }
    return clip;
}

AudioClip load_wav(const std::filesystem::path& path, const IngestConfig& cfg) {
    const auto bytes = read_file_bytes(path);
    return decode_wav(bytes, cfg, path.stem().string());
}

std::vector<std::uint8_t> encode_wav_float32(const AudioClip& clip) {
    std::vector<std::uint8_t> payload;
    payload.reserve(clip.samples.size() * 4);
    for (float s : clip.samples) {
        std::uint32_t u;
        std::memcpy(&u, &s, 4);
        append_u32(payload, u);
    }
    return encode_wav(clip, kFormatIeeeFloat, payload, 32);
}

std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip, double max_wav_value) {
    std::vector<std::uint8_t> payload;
    payload.reserve(clip.samples.size() * 2);
    for (float s : clip.samples) {
        double v = std::round(static_cast<double>(s) * max_wav_value);
        if (v > 32767.0) v = 32767.0;
        if (v < -32768.0) v = -32768.0;
        append_u16(payload, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    return encode_wav(clip, kFormatPcm, payload, 16);
}

void save_wav_float32(const AudioClip& clip, const std::filesystem::path& path) {
    const auto bytes = encode_wav_float32(clip);
    write_file_bytes(path, bytes.data(), bytes.size());
}

AudioClip normalize_peak(const AudioClip& clip) {
    float peak = 0.0f;
    for (float s : clip.samples) peak = std::max(peak, std::fabs(s));
    if (peak == 0.0f) throw SilentClip("all samples are zero");

    AudioClip out = clip;
    for (float& s : out.samples) s /= peak;
    return out;
}

AudioClip resample_linear(const AudioClip& clip, std::uint32_t target_rate) {
    if (target_rate == 0) throw ConfigError("target rate must be > 0");
    if (target_rate == clip.sample_rate) return clip;

    const std::size_t n_in = clip.samples.size();
    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    const std::size_t n_out =
        static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));

    AudioClip out;
    out.sample_rate = target_rate;
    out.source_id = clip.source_id;
    out.samples.resize(n_out);

    for (std::size_t j = 0; j < n_out; ++j) {
        const double pos = static_cast<double>(j) * clip.sample_rate / target_rate;
        const std::size_t i0 = std::min(static_cast<std::size_t>(pos), n_in - 1);
        if (i0 + 1 >= n_in) {
            out.samples[j] = clip.samples[n_in - 1];
        } else {
            const double frac = pos - static_cast<double>(i0);
            const double a = clip.samples[i0];
            const double b = clip.samples[i0 + 1];
            out.samples[j] = static_cast<float>(a + (b - a) * frac);
        }
    }
    return out;
}

}  // namespace h2s
