#pragma once

#define LATENTBRIDGE_VERSION "0.1.0"
