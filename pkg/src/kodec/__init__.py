"""Randomized compression against enumerable candidate sets, with a
distributed multi-party variant and the combinatorial machinery (prime
fingerprints, parity sketches, extractor tables) that makes it checkable."""

from .bitcore import (
    BitString,
    Dyadic,
    RandomSource,
    ceil_log2_div,
    dot_mod2,
    first_primes,
    is_prime,
    primes_of_bitlen,
    random_prime,
    residue,
)
from .codec import CompressedBlob, compress, decompress, overhead_bound
from .descriptions import (
    DescriptionSystem,
    IntegrityError,
    PlantedSystem,
    ToyVM,
    VmOutcome,
    enumerate_candidates,
    toyvm_run,
)
from .extractor import (
    ExtractorCheck,
    ExtractorFamily,
    ExtractorTable,
    FamilySearchError,
    bad_set,
    build_family,
    check_poor_bound,
    extract_with_seed,
    is_extractor,
    poor_elements,
    poor_report,
)
from .sketch import (
    Fingerprint,
    ParitySketch,
    bad_prime_fraction,
    parity_decode,
    parity_encode,
    prime_fp_decode,
    prime_fp_encode,
)
from .slepianwolf import (
    PartyMessage,
    SourceSpec,
    SwProfile,
    check_profile,
    gen_correlated,
    sw_decode,
    sw_encode,
)

__version__ = "0.1.0"
