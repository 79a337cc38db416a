#pragma once

#include "covertex/address_space.hpp"
#include "covertex/bench.hpp"
#include "covertex/cec.hpp"
#include "covertex/channel.hpp"
#include "covertex/crc.hpp"
#include "covertex/error.hpp"
#include "covertex/galois.hpp"
#include "covertex/image.hpp"
#include "covertex/permutation.hpp"
#include "covertex/reader.hpp"
#include "covertex/reed_solomon.hpp"
#include "covertex/rng.hpp"
#include "covertex/symbol_codec.hpp"
#include "covertex/synthetic_images.hpp"
#include "covertex/transmission.hpp"
#include "covertex/wire.hpp"
#include "covertex/writer.hpp"
