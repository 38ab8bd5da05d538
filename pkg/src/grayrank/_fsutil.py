import hashlib


def file_digest(path):
    """Returns the hex SHA-256 of the specified file's contents.

    The path should be a pathlib.Path instance. Returns None if it does
    not refer to a file.
    """
    if not path.is_file():
        return None
    digest = hashlib.sha256()
    with open(path, 'rb') as file:
        for chunk in iter(lambda: file.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def total_size_bytes(path):
    """Returns total size in bytes of specified file or directory.

    Directories are traversed recursively; a missing path counts as 0.
    """
    if path.is_file():
        return path.stat().st_size
    if not path.exists():
        return 0
    return sum(child.stat().st_size for child
               in path.glob('**/*')
               if child.is_file())
